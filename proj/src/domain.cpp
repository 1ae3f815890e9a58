#include "prefopt/domain.hpp"

#include "prefopt/errors.hpp"

#include <boost/random/sobol.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace prefopt {

namespace {

// Kept in sync with data/prosthesis4.json (a unit test compares the two).
constexpr const char* kProsthesis4Json = R"({
  "name": "prosthesis4",
  "mode": "continuous",
  "specs": [
    {"name": "t_SF", "lower": 40.0, "upper": 60.0, "unit_label": "%"},
    {"name": "k_SF", "lower": 0.4, "upper": 1.8, "unit_label": "Nm/°"},
    {"name": "theta_SF", "lower": 40.0, "upper": 60.0, "unit_label": "°"},
    {"name": "k_SE", "lower": 0.35, "upper": 0.6, "unit_label": "Nm/°"}
  ]
})";

constexpr double kCubeTolerance = 1e-12;

void check_dim(const ParameterSpace& space, const Configuration& x) {
  if (x.dim() != space.dim()) {
    throw ContractViolation("configuration has dimension " + std::to_string(x.dim()) +
                            ", space '" + space.name() + "' has " + std::to_string(space.dim()));
  }
}

double grid_node(int index, int points_per_dim) {
  return static_cast<double>(index) / static_cast<double>(points_per_dim - 1);
}

}  // namespace

ParameterSpace::ParameterSpace(std::string name, std::vector<ParameterSpec> specs, SpaceMode mode,
                               int points_per_dim)
    : name_(std::move(name)), specs_(std::move(specs)), mode_(mode), points_per_dim_(points_per_dim) {
  if (specs_.empty()) throw ConfigError("parameter space needs at least one dimension");
  std::set<std::string> names;
  for (const auto& s : specs_) {
    if (s.name.empty()) throw ConfigError("parameter name must be nonempty");
    if (!(s.lower < s.upper)) throw ConfigError("parameter '" + s.name + "' needs lower < upper");
    if (!names.insert(s.name).second) throw ConfigError("duplicate parameter name '" + s.name + "'");
  }
  if (mode_ == SpaceMode::grid && points_per_dim_ < 2) {
    throw ConfigError("grid mode needs points_per_dim >= 2");
  }
  if (mode_ == SpaceMode::continuous) points_per_dim_ = 0;
}

ParameterSpace ParameterSpace::unit_cube(std::size_t dim, SpaceMode mode, int points_per_dim) {
  std::vector<ParameterSpec> specs;
  for (std::size_t i = 0; i < dim; ++i) specs.push_back({"x" + std::to_string(i + 1), 0.0, 1.0, ""});
  return ParameterSpace("unit" + std::to_string(dim), std::move(specs), mode, points_per_dim);
}

double ParameterSpace::grid_step() const {
  if (!is_grid()) throw ContractViolation("grid_step on a continuous space");
  return 1.0 / static_cast<double>(points_per_dim_ - 1);
}

ParameterSpace ParameterSpace::as_continuous() const {
  return ParameterSpace(name_, specs_, SpaceMode::continuous);
}

ParameterSpace ParameterSpace::as_grid(int points_per_dim) const {
  return ParameterSpace(name_, specs_, SpaceMode::grid, points_per_dim);
}

Configuration::Configuration(std::initializer_list<double> values)
    : coords(static_cast<Eigen::Index>(values.size())) {
  Eigen::Index i = 0;
  for (double v : values) coords[i++] = v;
}

bool same_point(const Configuration& a, const Configuration& b, double tol) {
  if (a.dim() != b.dim()) return false;
  return (a.coords - b.coords).cwiseAbs().maxCoeff() <= tol;
}

bool lexicographic_less(const Configuration& a, const Configuration& b) {
  return std::lexicographical_compare(a.coords.begin(), a.coords.end(), b.coords.begin(),
                                      b.coords.end());
}

void validate(const ParameterSpace& space, const Configuration& x) {
  check_dim(space, x);
  for (Eigen::Index i = 0; i < x.coords.size(); ++i) {
    const double c = x.coords[i];
    if (!(c >= -kCubeTolerance && c <= 1.0 + kCubeTolerance)) {
      throw ContractViolation("coordinate " + std::to_string(i) + " outside the unit cube");
    }
  }
  if (space.is_grid() && !same_point(x, snap_to_grid(space, x), kCubeTolerance)) {
    throw ContractViolation("configuration is not on a grid node");
  }
}

std::vector<double> to_native(const ParameterSpace& space, const Configuration& x) {
  check_dim(space, x);
  std::vector<double> out(space.dim());
  for (std::size_t j = 0; j < space.dim(); ++j) {
    const auto& s = space.specs()[j];
    out[j] = s.lower + x[j] * (s.upper - s.lower);
  }
  return out;
}

Configuration from_native(const ParameterSpace& space, const std::vector<double>& native) {
  if (native.size() != space.dim()) throw ContractViolation("native vector has wrong dimension");
  Eigen::VectorXd c(static_cast<Eigen::Index>(space.dim()));
  for (std::size_t j = 0; j < space.dim(); ++j) {
    const auto& s = space.specs()[j];
    c[static_cast<Eigen::Index>(j)] = (native[j] - s.lower) / (s.upper - s.lower);
  }
  return Configuration(std::move(c));
}

Configuration midpoint(const ParameterSpace& space) {
  Configuration m(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(space.dim()), 0.5));
  return space.is_grid() ? snap_to_grid(space, m) : m;
}

Configuration clamp_to_cube(const Configuration& x) {
  return Configuration(x.coords.cwiseMax(0.0).cwiseMin(1.0));
}

std::vector<Configuration> make_grid(const ParameterSpace& space, std::size_t cap) {
  if (!space.is_grid()) throw ContractViolation("make_grid needs a grid-mode space");
  const auto p = static_cast<std::size_t>(space.points_per_dim());
  const std::size_t d = space.dim();
  std::size_t total = 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (total > cap / p) throw CapacityError("grid exceeds the node cap");
    total *= p;
  }
  if (total > cap) throw CapacityError("grid exceeds the node cap");

  std::vector<Configuration> nodes;
  nodes.reserve(total);
  std::vector<int> idx(d, 0);
  for (std::size_t n = 0; n < total; ++n) {
    Eigen::VectorXd c(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) c[static_cast<Eigen::Index>(j)] = grid_node(idx[j], space.points_per_dim());
    nodes.emplace_back(std::move(c));
    for (std::size_t j = d; j-- > 0;) {
      if (++idx[j] < space.points_per_dim()) break;
      idx[j] = 0;
    }
  }
  return nodes;
}

Configuration snap_to_grid(const ParameterSpace& space, const Configuration& x) {
  if (!space.is_grid()) throw ContractViolation("snap_to_grid needs a grid-mode space");
  check_dim(space, x);
  const int p = space.points_per_dim();
  const double scale = static_cast<double>(p - 1);
  Eigen::VectorXd c(x.coords.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double t = std::clamp(x.coords[i], 0.0, 1.0) * scale;
    int k = static_cast<int>(std::floor(t));
    if (t - k > 0.5) ++k;
    c[i] = grid_node(std::clamp(k, 0, p - 1), p);
  }
  return Configuration(std::move(c));
}

std::vector<Eigen::VectorXd> sobol_unit(std::size_t dim, std::size_t count, std::uint64_t seed,
                                        std::size_t offset, bool scramble) {
  if (dim == 0) throw ContractViolation("sobol_unit needs dim >= 1");
  // boost's engine starts at the second point of the sequence; index 0 is the origin.
  boost::random::sobol engine(dim);
  if (offset > 1) engine.discard(static_cast<boost::uintmax_t>(offset - 1) * dim);

  std::vector<std::uint64_t> shift(dim, 0);
  if (scramble) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x50b01u};
    std::mt19937_64 rng(seq);
    for (auto& s : shift) s = rng();
  }

  constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      const std::uint64_t raw = offset + n == 0 ? 0 : static_cast<std::uint64_t>(engine());
      const std::uint64_t bits = raw ^ shift[j];
      v[static_cast<Eigen::Index>(j)] = static_cast<double>(bits >> 11) * kInv53;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Configuration> sobol_points(const ParameterSpace& space, std::size_t count,
                                        std::uint64_t seed, std::size_t offset, bool scramble) {
  if (count == 0) throw ContractViolation("sobol_points needs count >= 1");
  std::vector<Configuration> pts;
  pts.reserve(count);
  for (auto& v : sobol_unit(space.dim(), count, seed, offset, scramble)) {
    Configuration c(std::move(v));
    pts.push_back(space.is_grid() ? snap_to_grid(space, c) : std::move(c));
  }
  return pts;
}

std::vector<Configuration> uniform_points(const ParameterSpace& space, std::size_t count,
                                          std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x0f00du};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Configuration> pts;
  pts.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(space.dim()));
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = unif(rng);
    Configuration c(std::move(v));
    pts.push_back(space.is_grid() ? snap_to_grid(space, c) : std::move(c));
  }
  return pts;
}

ParameterSpace prosthesis4_preset() { return space_from_json(nlohmann::json::parse(kProsthesis4Json)); }

ParameterSpace space_from_json(const nlohmann::json& j) {
  try {
    std::vector<ParameterSpec> specs;
    for (const auto& s : j.at("specs")) {
      specs.push_back({s.at("name").get<std::string>(), s.at("lower").get<double>(),
                       s.at("upper").get<double>(), s.value("unit_label", std::string{})});
    }
    const auto mode_name = j.value("mode", std::string("continuous"));
    SpaceMode mode;
    if (mode_name == "continuous") {
      mode = SpaceMode::continuous;
    } else if (mode_name == "grid") {
      mode = SpaceMode::grid;
    } else {
      throw ConfigError("unknown space mode '" + mode_name + "'");
    }
    return ParameterSpace(j.value("name", std::string("space")), std::move(specs), mode,
                          j.value("points_per_dim", 0));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed parameter space: ") + e.what());
  }
}

nlohmann::json space_to_json(const ParameterSpace& space) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : space.specs()) {
    specs.push_back({{"name", s.name}, {"lower", s.lower}, {"upper", s.upper}, {"unit_label", s.unit_label}});
  }
  nlohmann::json j{{"name", space.name()},
                   {"mode", space.is_grid() ? "grid" : "continuous"},
                   {"specs", std::move(specs)}};
  if (space.is_grid()) j["points_per_dim"] = space.points_per_dim();
  return j;
}

ParameterSpace load_space_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open parameter space file " + path);
  try {
    return space_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

ParameterSpace resolve_space(const std::string& preset_or_path) {
  if (preset_or_path == "prosthesis4") return prosthesis4_preset();
  return load_space_file(preset_or_path);
}

nlohmann::json configuration_to_json(const Configuration& x) {
  return nlohmann::json(std::vector<double>(x.coords.begin(), x.coords.end()));
}

Configuration configuration_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Configuration(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

}  // namespace prefopt
