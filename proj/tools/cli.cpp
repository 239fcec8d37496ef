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

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "epicorr/io/config.hpp"
#include "epicorr/io/nifti.hpp"
#include "epicorr/io/volume.hpp"
#include "epicorr/kmatrix.hpp"
#include "epicorr/metrics.hpp"
#include "epicorr/optimizer.hpp"
#include "epicorr/phantom.hpp"

namespace epicorr::cli {
namespace {

namespace fs = std::filesystem;
using io::VolumeContainer;
using io::VolumeKind;

struct Globals {
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::string nifti_pe_axis = "i";
};

// Recorded command line. Flags that cannot change any output byte are left
// out so that, e.g., --threads 1 and --threads 8 write identical files.
std::string recorded_command(const std::vector<std::string>& args) {
  std::string out;
  for (std::size_t k = 0; k < args.size(); ++k) {
    const std::string& a = args[k];
    if (a == "--verbose" || a == "-v") continue;
    if (a == "--threads") {
      ++k;
      continue;
    }
    if (a.starts_with("--threads=")) continue;
    if (!out.empty()) out += ' ';
    out += a;
  }
  return out;
}

void stamp(VolumeContainer& v, const std::string& command, const std::string& hash,
           const std::string& seed) {
  v.provenance["command"] = command;
  v.provenance["config_hash"] = hash;
  v.provenance["seed"] = seed;
  v.provenance["tool"] = "epicorr 0.1.0";
}

VolumeContainer load(const fs::path& path, const Globals& g) {
  const auto ext = path.extension().string();
  if (ext == ".nii") {
    return io::read_nifti_basic(path, g.nifti_pe_axis == "j" ? io::NiftiPeAxis::J : io::NiftiPeAxis::I);
  }
  if (ext == ".gz") throw UnsupportedFeature(path.string() + ": compressed NIfTI is not supported");
  return io::read_volume(path);
}

VolumeContainer load_field(const fs::path& path, const Globals& g) {
  VolumeContainer v = load(path, g);
  if (v.provenance.count("source") && v.provenance.at("source") == "nifti1") {
    v.kind = VolumeKind::Field;
    v.units = "pixels";
  }
  if (v.kind != VolumeKind::Field) throw FormatError(path.string() + ": expected a field container");
  return v;
}

void require_same_dims(const VolumeContainer& a, const VolumeContainer& b, const std::string& what) {
  if (a.dims != b.dims) throw InvalidInput(what + ": volume dimensions differ");
}

PePolarity parse_polarity(const std::string& text) {
  if (text == "bu") return PePolarity::BlipUp;
  if (text == "bd") return PePolarity::BlipDown;
  throw InvalidInput("polarity must be bu or bd");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw FormatError("failed writing " + path.string());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string provenance_json(const std::string& command, const std::string& hash,
                            const std::string& seed) {
  std::ostringstream os;
  os << "{\n  \"command\": \"";
  for (char c : command) {
    if (c == '"' || c == '\\') os << '\\';
    os << c;
  }
  os << "\",\n  \"config_hash\": \"" << hash << "\",\n  \"seed\": \"" << seed
     << "\",\n  \"tool\": \"epicorr 0.1.0\"\n}\n";
  return os.str();
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const fs::path& spec_path, const fs::path& out_dir, const Globals& g,
                 const std::string& command, std::ostream& out, std::ostream& err) {
  io::RunConfig config = io::read_config(spec_path);
  if (g.seed) config.phantom.seed = *g.seed;
  const std::string hash = io::config_hash(config);
  const std::string seed = std::to_string(config.phantom.seed);

  std::vector<Matrix> images, fields, bus, bds;
  std::vector<Mask> masks;
  for (int s = 0; s < config.slices; ++s) {
    const PhantomSpec spec = config.phantom_spec(s);
    const SimulatedPair sim = simulate_phantom(spec);
    images.push_back(sim.image.matrix());
    fields.push_back(sim.field.matrix());
    bus.push_back(sim.pair.blip_up.matrix());
    bds.push_back(sim.pair.blip_down.matrix());
    masks.push_back(mask_median_otsu(sim.image.matrix()));
    if (g.verbose) err << "simulated slice " << s << " (seed " << spec.seed << ")\n";
  }

  fs::create_directories(out_dir);
  auto write = [&](VolumeContainer v, const char* name) {
    stamp(v, command, hash, seed);
    io::write_volume(v, out_dir / name);
  };
  write(io::make_volume(images, VolumeKind::Image), "image.epiv");
  write(io::make_volume(fields, VolumeKind::Field), "field.epiv");
  write(io::make_volume(bus, VolumeKind::Image), "bu.epiv");
  write(io::make_volume(bds, VolumeKind::Image), "bd.epiv");
  write(io::make_mask_volume(masks), "mask.epiv");
  write_text(out_dir / "config.ini", io::serialize_config(config));
  write_text(out_dir / "provenance.json", provenance_json(command, hash, seed));
  out << "wrote " << config.slices << " slice(s) to " << out_dir.string() << "\n";
  return kOk;
}

// ------------------------------------------------------- distort / unwarp

int cmd_warp(bool forward, const fs::path& image_path, const fs::path& field_path,
             const std::string& polarity_text, bool density_comp, const fs::path& out_path,
             const Globals& g, const std::string& command, std::ostream& out) {
  const PePolarity polarity = parse_polarity(polarity_text);
  const VolumeContainer image = load(image_path, g);
  const VolumeContainer field = load_field(field_path, g);
  require_same_dims(image, field, forward ? "distort" : "unwarp");

  std::vector<Matrix> result;
  for (std::int64_t s = 0; s < image.slice_count(); ++s) {
    const ImageSlice img(io::slice_matrix(image, s));
    const DisplacementField fld(io::slice_matrix(field, s));
    result.push_back(forward ? forward_distort(img, fld, polarity).matrix()
                             : unwarp(img, fld, polarity, density_comp).matrix());
  }
  VolumeContainer v = io::make_volume(result, VolumeKind::Image, image.units);
  v.dims = image.dims;
  stamp(v, command, io::config_hash(io::RunConfig{}),
        g.seed ? std::to_string(*g.seed) : std::string("none"));
  io::write_volume(v, out_path);
  out << "wrote " << out_path.string() << "\n";
  return kOk;
}

// ----------------------------------------------------------------- correct

int cmd_correct(const fs::path& bu_path, const fs::path& bd_path, const std::string& config_path,
                const fs::path& out_dir, const Globals& g, const std::string& command,
                std::ostream& out, std::ostream& err) {
  const io::RunConfig config = config_path.empty() ? io::RunConfig{} : io::read_config(config_path);
  const std::string hash = io::config_hash(config);
  const std::string seed = g.seed ? std::to_string(*g.seed) : std::string("none");

  const VolumeContainer bu = load(bu_path, g);
  const VolumeContainer bd = load(bd_path, g);
  require_same_dims(bu, bd, "correct");
  std::vector<ReversedPePair> pairs;
  for (std::int64_t s = 0; s < bu.slice_count(); ++s) {
    pairs.push_back({ImageSlice(io::slice_matrix(bu, s)), ImageSlice(io::slice_matrix(bd, s))});
  }
  if (g.verbose) {
    err << "correcting " << pairs.size() << " slice(s) on " << g.threads << " thread(s), config "
        << hash << "\n";
  }
  const auto results = estimate_volume(pairs, config.optimizer, g.threads);

  std::vector<Matrix> images, fields;
  std::ostringstream rigid_csv, trace_csv;
  rigid_csv << "slice,shift_fe,shift_pe,rotation_rad,rotation_deg,converged\n"
            << std::setprecision(17);
  trace_csv << "slice,factor,iteration,loss\n" << std::setprecision(17);
  for (std::size_t s = 0; s < results.size(); ++s) {
    const auto& r = results[s];
    images.push_back(r.image.matrix());
    fields.push_back(r.field.matrix());
    rigid_csv << s << ',' << r.rigid.shift_fe << ',' << r.rigid.shift_pe << ',' << r.rigid.rotation
              << ',' << r.rigid.rotation * 180.0 / std::numbers::pi << ',' << (r.converged ? 1 : 0)
              << '\n';
    for (const auto& level : r.trace) {
      for (std::size_t it = 0; it < level.loss.size(); ++it) {
        trace_csv << s << ',' << level.factor << ',' << it << ',' << level.loss[it] << '\n';
      }
    }
    if (g.verbose) {
      err << "slice " << s << ": final loss " << r.trace.back().loss.back()
          << (r.converged ? "" : " (iteration limit reached)") << "\n";
    }
  }

  fs::create_directories(out_dir);
  VolumeContainer image = io::make_volume(images, VolumeKind::Image, bu.units);
  VolumeContainer field = io::make_volume(fields, VolumeKind::Field);
  stamp(image, command, hash, seed);
  stamp(field, command, hash, seed);
  io::write_volume(image, out_dir / "image.epiv");
  io::write_volume(field, out_dir / "field.epiv");
  write_text(out_dir / "rigid.csv", rigid_csv.str());
  write_text(out_dir / "loss_trace.csv", trace_csv.str());
  write_text(out_dir / "config.ini", io::serialize_config(config));
  write_text(out_dir / "provenance.json", provenance_json(command, hash, seed));
  out << "wrote corrected image and field for " << results.size() << " slice(s) to "
      << out_dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct SliceReport {
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
  double rmse = 0.0;
  Index pixels = 0;
};

int cmd_evaluate(const fs::path& ref_path, const fs::path& test_path, const std::string& mask_path,
                 const fs::path& report_path, const Globals& g, std::ostream& out) {
  const VolumeContainer ref = load(ref_path, g);
  const VolumeContainer test = load(test_path, g);
  require_same_dims(ref, test, "evaluate");
  std::optional<VolumeContainer> mask_source;
  if (!mask_path.empty()) {
    mask_source = load(mask_path, g);
    require_same_dims(ref, *mask_source, "evaluate --mask-from");
  }
  if (ref.kind == VolumeKind::Field && mask_path.empty()) {
    throw InvalidInput("evaluate: field comparisons need --mask-from");
  }

  std::vector<SliceReport> slices;
  for (std::int64_t s = 0; s < ref.slice_count(); ++s) {
    const Matrix r = io::slice_matrix(ref, s);
    const Matrix t = io::slice_matrix(test, s);
    std::optional<Mask> mask;
    if (mask_source) {
      mask = mask_source->kind == VolumeKind::Mask ? io::slice_mask(*mask_source, s)
                                                   : mask_median_otsu(io::slice_matrix(*mask_source, s));
    }
    const Mask* m = mask ? &*mask : nullptr;
    SliceReport rep;
    rep.rmse = masked_rmse(r, t, m);
    rep.pixels = m ? m->count() : r.size();
    // PSNR is undefined for a non-positive peak (e.g. a field that is
    // negative over the whole mask); it is then reported as nan.
    try {
      rep.psnr = psnr(r, t, m);
    } catch (const InvalidInput&) {
    }
    rep.ssim = ssim(r, t, m);
    slices.push_back(rep);
  }

  auto mean = [&](double SliceReport::*field) {
    double sum = 0.0;
    for (const auto& s : slices) sum += s.*field;
    return sum / static_cast<double>(slices.size());
  };
  std::ostringstream rep;
  rep << "ref=" << ref_path.string() << "\n";
  rep << "test=" << test_path.string() << "\n";
  rep << "mask=" << (mask_path.empty() ? std::string("none") : mask_path) << "\n";
  rep << "kind=" << io::to_string(ref.kind) << "\n";
  rep << "slices=" << slices.size() << "\n";
  rep << "psnr_mean=" << fmt(mean(&SliceReport::psnr)) << "\n";
  rep << "ssim_mean=" << fmt(mean(&SliceReport::ssim)) << "\n";
  rep << "rmse_mean=" << fmt(mean(&SliceReport::rmse)) << "\n";
  for (std::size_t s = 0; s < slices.size(); ++s) {
    rep << "slice" << s << ".psnr=" << fmt(slices[s].psnr) << "\n";
    rep << "slice" << s << ".ssim=" << fmt(slices[s].ssim) << "\n";
    rep << "slice" << s << ".rmse=" << fmt(slices[s].rmse) << "\n";
    rep << "slice" << s << ".pixels=" << slices[s].pixels << "\n";
  }
  rep << "\n";
  rep << std::left << std::setw(8) << "slice" << std::right << std::setw(12) << "PSNR [dB]"
      << std::setw(10) << "SSIM" << std::setw(14) << "RMSE" << std::setw(10) << "pixels" << "\n";
  auto cell = [](double v, int prec) {
    if (std::isnan(v)) return std::string("-");
    if (std::isinf(v)) return std::string("inf");
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
  };
  for (std::size_t s = 0; s < slices.size(); ++s) {
    rep << std::left << std::setw(8) << s << std::right << std::setw(12) << cell(slices[s].psnr, 2)
        << std::setw(10) << cell(slices[s].ssim, 4) << std::setw(14) << cell(slices[s].rmse, 6)
        << std::setw(10) << slices[s].pixels << "\n";
  }
  rep << std::left << std::setw(8) << "mean" << std::right << std::setw(12)
      << cell(mean(&SliceReport::psnr), 2) << std::setw(10)
      << cell(mean(&SliceReport::ssim), 4) << std::setw(14)
      << cell(mean(&SliceReport::rmse), 6) << "\n";

  write_text(report_path, rep.str());
  out << rep.str();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Susceptibility distortion correction for reversed phase-encode EPI", "epicorr"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Slices processed concurrently")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Random seed (simulate overrides the config seed)");
  app.add_flag("-v,--verbose", g.verbose, "Progress messages on stderr");
  app.add_option("--nifti-pe-axis", g.nifti_pe_axis, "Phase-encode voxel axis of .nii inputs")
      ->check(CLI::IsMember({"i", "j"}));

  std::string a_spec, a_out_dir, a_image, a_field, a_polarity, a_out, a_bu, a_bd, a_config,
      a_ref, a_test, a_mask, a_report;
  bool a_density = false;

  auto* simulate = app.add_subcommand("simulate", "Write a synthetic phantom, field and BU/BD pair");
  simulate->add_option("--spec", a_spec, "Config file with a [phantom] section")->required();
  simulate->add_option("--out-dir", a_out_dir, "Output directory")->required();

  auto* distort = app.add_subcommand("distort", "Apply the forward distortion model");
  distort->add_option("--image", a_image)->required();
  distort->add_option("--field", a_field)->required();
  distort->add_option("--polarity", a_polarity, "bu or bd")->required()->check(CLI::IsMember({"bu", "bd"}));
  distort->add_option("--out", a_out)->required();

  auto* unwarp_cmd = app.add_subcommand("unwarp", "Unwarp with the transposed distortion model");
  unwarp_cmd->add_option("--image", a_image)->required();
  unwarp_cmd->add_option("--field", a_field)->required();
  unwarp_cmd->add_option("--polarity", a_polarity, "bu or bd")->required()->check(CLI::IsMember({"bu", "bd"}));
  unwarp_cmd->add_flag("--density-comp", a_density, "Weight by the clamped inverse density map");
  unwarp_cmd->add_option("--out", a_out)->required();

  auto* correct = app.add_subcommand("correct", "Estimate image, field and rigid motion");
  correct->add_option("--bu", a_bu, "Blip-up volume")->required();
  correct->add_option("--bd", a_bd, "Blip-down volume")->required();
  correct->add_option("--config", a_config, "Run config (defaults when omitted)");
  correct->add_option("--out-dir", a_out_dir, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "PSNR / SSIM / RMSE against a reference");
  evaluate->add_option("--ref", a_ref)->required();
  evaluate->add_option("--test", a_test)->required();
  evaluate->add_option("--mask-from", a_mask, "Mask container, or image to median-Otsu threshold");
  evaluate->add_option("--report", a_report)->required();

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  const std::string command = recorded_command(args);
  try {
    if (*simulate) return cmd_simulate(a_spec, a_out_dir, g, command, out, err);
    if (*distort) return cmd_warp(true, a_image, a_field, a_polarity, false, a_out, g, command, out);
    if (*unwarp_cmd) {
      return cmd_warp(false, a_image, a_field, a_polarity, a_density, a_out, g, command, out);
    }
    if (*correct) return cmd_correct(a_bu, a_bd, a_config, a_out_dir, g, command, out, err);
    if (*evaluate) return cmd_evaluate(a_ref, a_test, a_mask, a_report, g, out);
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace epicorr::cli
