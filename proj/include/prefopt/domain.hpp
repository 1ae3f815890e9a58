#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace prefopt {

struct ParameterSpec {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  std::string unit_label;
};

enum class SpaceMode { continuous, grid };

/// Named box domain. Algorithms only ever see the unit cube [0,1]^d; native
/// units exist for presentation and logging.
class ParameterSpace {
 public:
  ParameterSpace(std::string name, std::vector<ParameterSpec> specs,
                 SpaceMode mode = SpaceMode::continuous, int points_per_dim = 0);

  static ParameterSpace unit_cube(std::size_t dim, SpaceMode mode = SpaceMode::continuous,
                                  int points_per_dim = 0);

  const std::string& name() const { return name_; }
  const std::vector<ParameterSpec>& specs() const { return specs_; }
  std::size_t dim() const { return specs_.size(); }
  SpaceMode mode() const { return mode_; }
  bool is_grid() const { return mode_ == SpaceMode::grid; }
  int points_per_dim() const { return points_per_dim_; }
  double grid_step() const;

  ParameterSpace as_continuous() const;
  ParameterSpace as_grid(int points_per_dim) const;

 private:
  std::string name_;
  std::vector<ParameterSpec> specs_;
  SpaceMode mode_;
  int points_per_dim_;
};

/// A point of the unit cube.
struct Configuration {
  Eigen::VectorXd coords;

  Configuration() = default;
  explicit Configuration(Eigen::VectorXd c) : coords(std::move(c)) {}
  Configuration(std::initializer_list<double> values);

  std::size_t dim() const { return static_cast<std::size_t>(coords.size()); }
  double operator[](std::size_t i) const { return coords[static_cast<Eigen::Index>(i)]; }
};

bool same_point(const Configuration& a, const Configuration& b, double tol = 1e-10);
bool lexicographic_less(const Configuration& a, const Configuration& b);

/// Throws ContractViolation unless x has the space's dimension and lies in the
/// cube (within 1e-12); grid spaces also require x to sit on a node.
void validate(const ParameterSpace& space, const Configuration& x);

std::vector<double> to_native(const ParameterSpace& space, const Configuration& x);
Configuration from_native(const ParameterSpace& space, const std::vector<double>& native);

Configuration midpoint(const ParameterSpace& space);
Configuration clamp_to_cube(const Configuration& x);

inline constexpr std::size_t kDefaultGridCap = 10'000'000;

/// Full Cartesian grid in lexicographic order (last coordinate fastest).
std::vector<Configuration> make_grid(const ParameterSpace& space,
                                     std::size_t cap = kDefaultGridCap);

/// Nearest grid node per coordinate; exact midpoints go to the lower node.
Configuration snap_to_grid(const ParameterSpace& space, const Configuration& x);

/// Points `offset .. offset+count-1` of a d-dimensional Sobol sequence.
/// Scrambling applies a seeded random digital shift; grid spaces get snapped.
std::vector<Configuration> sobol_points(const ParameterSpace& space, std::size_t count,
                                        std::uint64_t seed, std::size_t offset = 0,
                                        bool scramble = true);

/// Raw Sobol draws in [0,1)^dim, independent of any space.
std::vector<Eigen::VectorXd> sobol_unit(std::size_t dim, std::size_t count, std::uint64_t seed,
                                        std::size_t offset = 0, bool scramble = true);

std::vector<Configuration> uniform_points(const ParameterSpace& space, std::size_t count,
                                          std::uint64_t seed);

ParameterSpace prosthesis4_preset();
ParameterSpace space_from_json(const nlohmann::json& j);
nlohmann::json space_to_json(const ParameterSpace& space);
ParameterSpace load_space_file(const std::string& path);
/// Preset name ("prosthesis4") or a path to a preset file.
ParameterSpace resolve_space(const std::string& preset_or_path);

nlohmann::json configuration_to_json(const Configuration& x);
Configuration configuration_from_json(const nlohmann::json& j);

}  // namespace prefopt
