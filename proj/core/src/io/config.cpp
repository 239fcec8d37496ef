// Copyright 2026 The epicorr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "epicorr/io/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <vector>

namespace epicorr::io {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

long long to_integer(std::string_view s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw FormatError("expected true or false, got '" + std::string(s) + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T>
std::string fmt_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(values[k]);
    } else {
      out += std::to_string(values[k]);
    }
  }
  return out;
}

std::vector<double> to_double_list(std::string_view s) {
  std::vector<double> out;
  for (auto item : split(s, ',')) out.push_back(to_double(item));
  return out;
}

std::vector<int> to_int_list(std::string_view s) {
  std::vector<int> out;
  for (auto item : split(s, ',')) out.push_back(static_cast<int>(to_integer(item)));
  return out;
}

// Bumps are "row col amplitude width" groups separated by ';'.
std::vector<GaussianBump> to_bumps(std::string_view s) {
  std::vector<GaussianBump> out;
  for (auto group : split(s, ';')) {
    std::vector<double> v;
    std::istringstream in{std::string(group)};
    std::string tok;
    while (in >> tok) v.push_back(to_double(tok));
    if (v.size() != 4) throw FormatError("a bump needs 4 numbers: row col amplitude width");
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  return out;
}

std::string fmt_bumps(const std::vector<GaussianBump>& bumps) {
  std::string out;
  for (std::size_t k = 0; k < bumps.size(); ++k) {
    if (k) out += "; ";
    out += fmt(bumps[k].row) + " " + fmt(bumps[k].col) + " " + fmt(bumps[k].amplitude) + " " +
           fmt(bumps[k].width);
  }
  return out;
}

struct Key {
  std::string_view section;
  std::string_view name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define EPICORR_DOUBLE(sec, name, member)                                         \
  Key { sec, name, [](RunConfig& c, std::string_view v) { c.member = to_double(v); }, \
        [](const RunConfig& c) { return fmt(static_cast<double>(c.member)); } }
#define EPICORR_INT(sec, name, member, type)                                                \
  Key { sec, name,                                                                          \
        [](RunConfig& c, std::string_view v) { c.member = static_cast<type>(to_integer(v)); }, \
        [](const RunConfig& c) { return std::to_string(c.member); } }
#define EPICORR_BOOL(sec, name, member)                                        \
  Key { sec, name, [](RunConfig& c, std::string_view v) { c.member = to_bool(v); }, \
        [](const RunConfig& c) { return fmt(c.member); } }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"optimizer", "pyramid_factors",
          [](RunConfig& c, std::string_view v) { c.optimizer.pyramid_factors = to_int_list(v); },
          [](const RunConfig& c) { return fmt_list(c.optimizer.pyramid_factors); }},
      EPICORR_INT("optimizer", "iterations", optimizer.iterations, int),
      EPICORR_INT("optimizer", "field_steps_per_solve", optimizer.field_steps_per_solve, int),
      EPICORR_DOUBLE("optimizer", "initial_step", optimizer.initial_step),
      EPICORR_DOUBLE("optimizer", "max_step", optimizer.max_step),
      EPICORR_DOUBLE("optimizer", "step_growth", optimizer.step_growth),
      EPICORR_DOUBLE("optimizer", "step_shrink", optimizer.step_shrink),
      EPICORR_INT("optimizer", "max_backtracks", optimizer.max_backtracks, int),
      EPICORR_DOUBLE("optimizer", "momentum", optimizer.momentum),
      EPICORR_DOUBLE("optimizer", "gradient_smoothing", optimizer.gradient_smoothing),
      EPICORR_DOUBLE("optimizer", "image_epsilon", optimizer.image_epsilon),
      EPICORR_DOUBLE("optimizer", "tolerance", optimizer.tolerance),
      EPICORR_BOOL("optimizer", "rigid_enabled", optimizer.rigid_enabled),
      EPICORR_BOOL("optimizer", "freeze_rigid_after_coarsest", optimizer.freeze_rigid_after_coarsest),
      EPICORR_DOUBLE("optimizer", "rigid_initial_step", optimizer.rigid_initial_step),
      EPICORR_DOUBLE("loss", "lambda", optimizer.lambda),
      EPICORR_DOUBLE("loss", "gamma", optimizer.gamma),
      EPICORR_DOUBLE("loss", "tau", optimizer.tau),
      Key{"multires", "mode",
          [](RunConfig& c, std::string_view v) { c.optimizer.multires.mode = parse_multires_mode(v); },
          [](const RunConfig& c) { return std::string(to_string(c.optimizer.multires.mode)); }},
      Key{"multires", "blur_sigmas",
          [](RunConfig& c, std::string_view v) { c.optimizer.multires.blur_sigmas = to_double_list(v); },
          [](const RunConfig& c) { return fmt_list(c.optimizer.multires.blur_sigmas); }},
      Key{"multires", "downsample_factors",
          [](RunConfig& c, std::string_view v) { c.optimizer.multires.downsample_factors = to_int_list(v); },
          [](const RunConfig& c) { return fmt_list(c.optimizer.multires.downsample_factors); }},
      Key{"multires", "weights",
          [](RunConfig& c, std::string_view v) { c.optimizer.multires.weights = to_double_list(v); },
          [](const RunConfig& c) { return fmt_list(c.optimizer.multires.weights); }},
      EPICORR_INT("phantom", "slices", slices, int),
      EPICORR_INT("phantom", "n_fe", phantom.n_fe, Index),
      EPICORR_INT("phantom", "n_pe", phantom.n_pe, Index),
      EPICORR_INT("phantom", "ellipse_count", phantom.ellipse_count, int),
      EPICORR_DOUBLE("phantom", "intensity_min", phantom.intensity_min),
      EPICORR_DOUBLE("phantom", "intensity_max", phantom.intensity_max),
      EPICORR_DOUBLE("phantom", "edge_width", phantom.edge_width),
      EPICORR_DOUBLE("phantom", "texture_amplitude", phantom.texture_amplitude),
      EPICORR_INT("phantom", "bump_count", phantom.bump_count, int),
      EPICORR_DOUBLE("phantom", "amplitude_bound", phantom.amplitude_bound),
      EPICORR_DOUBLE("phantom", "width_min", phantom.width_min),
      EPICORR_DOUBLE("phantom", "width_max", phantom.width_max),
      Key{"phantom", "bumps",
          [](RunConfig& c, std::string_view v) { c.phantom.bumps = to_bumps(v); },
          [](const RunConfig& c) { return fmt_bumps(c.phantom.bumps); }},
      EPICORR_DOUBLE("phantom", "shift_fe", phantom.rigid.shift_fe),
      EPICORR_DOUBLE("phantom", "shift_pe", phantom.rigid.shift_pe),
      EPICORR_DOUBLE("phantom", "rotation_deg", rotation_deg),
      EPICORR_DOUBLE("phantom", "noise_sd", phantom.noise_sd),
      Key{"phantom", "seed",
          [](RunConfig& c, std::string_view v) {
            if (trim(v).starts_with('-')) throw FormatError("seed must be non-negative");
            std::uint64_t s = 0;
            const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
            if (ec != std::errc() || p != v.data() + v.size()) {
              throw FormatError("expected an integer, got '" + std::string(v) + "'");
            }
            c.phantom.seed = s;
          },
          [](const RunConfig& c) { return std::to_string(c.phantom.seed); }},
  };
  return table;
}

#undef EPICORR_DOUBLE
#undef EPICORR_INT
#undef EPICORR_BOOL

}  // namespace

PhantomSpec RunConfig::phantom_spec(int s) const {
  PhantomSpec spec = phantom;
  spec.rigid.rotation = rotation_deg * std::numbers::pi / 180.0;
  spec.seed = phantom.seed + static_cast<std::uint64_t>(s);
  return spec;
}

void RunConfig::validate() const {
  optimizer.validate();
  phantom_spec().validate();
  if (slices < 1) throw InvalidInput("config: slices must be >= 1");
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto eol = text.find('\n', start);
    const std::string_view raw =
        text.substr(start, eol == std::string_view::npos ? std::string_view::npos : eol - start);
    start = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };

    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(where() + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "optimizer" && section != "loss" && section != "multires" &&
          section != "phantom") {
        throw FormatError(where() + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError(where() + "expected key = value");
    if (section.empty()) throw FormatError(where() + "key outside of a section");
    const auto name = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const Key* key = nullptr;
    for (const auto& k : keys()) {
      if (k.section == section && k.name == name) key = &k;
    }
    if (!key) throw FormatError(where() + "unknown key '" + std::string(name) + "' in [" + section + "]");
    try {
      key->set(config, value);
    } catch (const Error& e) {
      throw FormatError(where() + std::string(name) + ": " + e.what());
    }
  }
  try {
    config.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return config;
}

RunConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_config(text);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  std::string_view section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      if (!section.empty()) out += '\n';
      section = k.section;
      out += "[" + std::string(section) + "]\n";
    }
    out += std::string(k.name) + " = " + k.get(config) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : serialize_config(config)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace epicorr::io
