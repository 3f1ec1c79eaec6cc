#include "dsol/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include "dsol/error.hpp"

namespace dsol {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
bool ParseNumber(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool ParseBool(const std::string& s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
  } else if (s == "false" || s == "0") {
    out = false;
  } else {
    return false;
  }
  return true;
}

using Setter = std::function<bool(OdometryConfig&, const std::string&)>;

template <class T, class Get>
Setter Field(Get get) {
  return [get](OdometryConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return ParseBool(v, get(c));
    } else {
      return ParseNumber(v, get(c));
    }
  };
}

const std::map<std::string, Setter>& Setters() {
  static const std::map<std::string, Setter> table = {
      {"pyramid.levels", Field<int>([](OdometryConfig& c) -> int& { return c.pyramid_levels; })},
      {"select.cell_size", Field<int>([](OdometryConfig& c) -> int& { return c.select.cell_size; })},
      {"select.g_min_init", Field<double>([](OdometryConfig& c) -> double& { return c.select.g_min_init; })},
      {"select.delta_g", Field<double>([](OdometryConfig& c) -> double& { return c.select.delta_g; })},
      {"select.dilation_radius", Field<int>([](OdometryConfig& c) -> int& { return c.select.dilation_radius; })},
      {"select.min_points", Field<int>([](OdometryConfig& c) -> int& { return c.select.min_points; })},
      {"select.max_points", Field<int>([](OdometryConfig& c) -> int& { return c.select.max_points; })},
      {"stereo.max_disparity", Field<double>([](OdometryConfig& c) -> double& { return c.stereo.max_disparity; })},
      {"stereo.search_radius", Field<int>([](OdometryConfig& c) -> int& { return c.stereo.search_radius; })},
      {"stereo.zncc_min", Field<double>([](OdometryConfig& c) -> double& { return c.stereo.zncc_min; })},
      {"align.c", Field<double>([](OdometryConfig& c) -> double& { return c.align.c; })},
      {"align.nu", Field<double>([](OdometryConfig& c) -> double& { return c.align.nu; })},
      {"align.max_iters", Field<int>([](OdometryConfig& c) -> int& { return c.align.max_iters; })},
      {"align.plateau_tol", Field<double>([](OdometryConfig& c) -> double& { return c.align.plateau_tol; })},
      {"align.levels", Field<int>([](OdometryConfig& c) -> int& { return c.align.levels; })},
      {"align.stereo", Field<bool>([](OdometryConfig& c) -> bool& { return c.align.stereo; })},
      {"pba.max_iters", Field<int>([](OdometryConfig& c) -> int& { return c.pba.max_iters; })},
      {"pba.levels", Field<int>([](OdometryConfig& c) -> int& { return c.pba.levels; })},
      {"pba.plateau_tol", Field<double>([](OdometryConfig& c) -> double& { return c.pba.plateau_tol; })},
      {"pba.rho_min", Field<double>([](OdometryConfig& c) -> double& { return c.pba.rho_min; })},
      {"pba.rho_max", Field<double>([](OdometryConfig& c) -> double& { return c.pba.rho_max; })},
      {"pba.damping_init", Field<double>([](OdometryConfig& c) -> double& { return c.pba.damping_init; })},
      {"window.N", Field<int>([](OdometryConfig& c) -> int& { return c.window.N; })},
      {"window.Q_min", Field<double>([](OdometryConfig& c) -> double& { return c.window.Q_min; })},
      {"window.min_points", Field<int>([](OdometryConfig& c) -> int& { return c.window.min_points; })},
  };
  return table;
}

}  // namespace

OdometryConfig ParseConfig(const std::string& text, OdometryConfig base) {
  const auto& setters = Setters();
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!it->second(base, value)) {
      throw ConfigError(where + "bad value '" + value + "' for " + key);
    }
  }
  // The PBA shares the robust weighting of tracking.
  base.pba.c = base.align.c;
  base.pba.nu = base.align.nu;
  base.Validate();
  return base;
}

OdometryConfig LoadConfig(const std::string& path, OdometryConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ParseConfig(ss.str(), std::move(base));
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : Setters()) keys.push_back(k);
  return keys;
}

}  // namespace dsol
