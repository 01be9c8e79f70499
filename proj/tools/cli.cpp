#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "styleid/checkpoint.hpp"
#include "styleid/dataset.hpp"
#include "styleid/image_io.hpp"
#include "styleid/metrics.hpp"
#include "styleid/style_injection.hpp"
#include "styleid/trainer.hpp"

namespace styleid::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  out << text;
  out.close();
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

fs::path sidecar_path(const fs::path& p) { return fs::path(p.string() + ".json"); }

std::vector<int> parse_layers(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int id = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      ids.push_back(id);
    } catch (const std::logic_error&) {
      throw ConfigError("--layers expects comma-separated attention layer ids or 'decoder', got '" + text + "'");
    }
  }
  if (ids.empty()) throw ConfigError("--layers is empty");
  return ids;
}

TensorF load_model_input(const fs::path& path, int resolution) {
  return unit_to_model(resize_bicubic(read_png(path), resolution, resolution));
}

/// Model-range output -> unit range, quantised exactly as the PNG will store it.
TensorF to_output_image(const TensorF& z) {
  const TensorF clamped(z.shape(), Vector<float>(z.vec().cwiseMax(-1.0f).cwiseMin(1.0f)));
  return quantize8(model_to_unit(clamped));
}

// ---------------------------------------------------------------------------
// Stylisation settings, shared by stylize and diagnose.

struct StylizeRun {
  std::string content;
  std::string style;
  std::string checkpoint = "models/toy_unet.ckpt";
  std::string out;
  StyleIdConfig config;
};

json config_json(const StyleIdConfig& c) {
  json j{{"gamma", c.gamma},
         {"tau", c.tau},
         {"steps", c.steps},
         {"enable_injection", c.enable_injection},
         {"enable_adain", c.enable_adain},
         {"enable_temperature", c.enable_temperature}};
  j["layers"] = c.injected_layers ? json(*c.injected_layers) : json("decoder");
  return j;
}

json run_json(const StylizeRun& r) {
  json j = config_json(r.config);
  j["content"] = r.content;
  j["style"] = r.style;
  j["checkpoint"] = r.checkpoint;
  j["out"] = r.out;
  return j;
}

void apply_json(const json& j, StylizeRun& r) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "content") r.content = value.get<std::string>();
      else if (key == "style") r.style = value.get<std::string>();
      else if (key == "checkpoint") r.checkpoint = value.get<std::string>();
      else if (key == "out") r.out = value.get<std::string>();
      else if (key == "gamma") r.config.gamma = value.get<double>();
      else if (key == "tau") r.config.tau = value.get<double>();
      else if (key == "steps") r.config.steps = value.get<int>();
      else if (key == "enable_injection") r.config.enable_injection = value.get<bool>();
      else if (key == "enable_adain") r.config.enable_adain = value.get<bool>();
      else if (key == "enable_temperature") r.config.enable_temperature = value.get<bool>();
      else if (key == "layers") {
        if (value.is_string() && value.get<std::string>() == "decoder") r.config.injected_layers.reset();
        else r.config.injected_layers = value.get<std::vector<int>>();
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// Flags for the stylisation settings. Unset optionals leave the run as is,
/// so flags layer on top of a replayed config file.
struct StylizeFlags {
  std::optional<std::string> config_file, content, style, checkpoint, out, layers;
  std::optional<double> gamma, tau;
  std::optional<int> steps;
  bool no_adain = false, no_injection = false, no_temperature = false;

  void add_to(CLI::App* sub, const std::string& out_help, bool with_ablations) {
    sub->add_option("--out", out, out_help);
    sub->add_option("--config", config_file, "JSON file of settings (e.g. an emitted sidecar); flags override it");
    sub->add_option("--content", content, "Content image (PNG)");
    sub->add_option("--style", style, "Style image (PNG)");
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint [models/toy_unet.ckpt]");
    sub->add_option("--gamma", gamma, "Query preservation ratio in [0, 1] [0.75]")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--tau", tau, "Attention temperature >= 1 [1.5]")->check(CLI::Range(1.0, 1e6));
    sub->add_option("--steps", steps, "DDIM steps [50]")->check(CLI::Range(1, 1000));
    sub->add_option("--layers", layers, "Injected attention layer ids, comma-separated, or 'decoder' [decoder]");
    if (with_ablations) {
      sub->add_flag("--no-adain", no_adain, "Start sampling from the content latent as is");
      sub->add_flag("--no-injection", no_injection, "Disable key/value injection and query blending");
      sub->add_flag("--no-temperature", no_temperature, "Use tau = 1 on injected layers");
    }
  }

  StylizeRun resolve() const {
    StylizeRun r;
    if (config_file) {
      const json j = read_json_file(*config_file);
      apply_json(j.contains("config") ? j.at("config") : j, r);
    }
    if (content) r.content = *content;
    if (style) r.style = *style;
    if (checkpoint) r.checkpoint = *checkpoint;
    if (out) r.out = *out;
    if (gamma) r.config.gamma = *gamma;
    if (tau) r.config.tau = *tau;
    if (steps) r.config.steps = *steps;
    if (layers) {
      if (*layers == "decoder") r.config.injected_layers.reset();
      else r.config.injected_layers = parse_layers(*layers);
    }
    if (no_adain) r.config.enable_adain = false;
    if (no_injection) r.config.enable_injection = false;
    if (no_temperature) r.config.enable_temperature = false;
    if (r.content.empty() || r.style.empty()) throw ConfigError("--content and --style are required");
    if (r.out.empty()) throw ConfigError("--out is required");
    return r;
  }
};

struct PreparedPair {
  UNetWeights<float> weights;
  NoiseSchedule schedule;
  TensorF content_unit, style_unit;
  Inversion<float> content, style;
  double load_s = 0, invert_s = 0;
};

PreparedPair prepare(const StylizeRun& r) {
  PreparedPair p;
  auto t0 = Clock::now();
  p.weights = load_checkpoint(r.checkpoint);
  const auto& model = p.weights.config;
  r.config.validate(model);
  p.schedule = build_noise_schedule(model.train_steps);
  const TensorF content = load_model_input(r.content, model.resolution);
  const TensorF style = load_model_input(r.style, model.resolution);
  p.content_unit = model_to_unit(content);
  p.style_unit = model_to_unit(style);
  p.load_s = seconds_since(t0);

  t0 = Clock::now();
  const auto steps = make_step_schedule(r.config.steps, model.train_steps);
  const auto layers = r.config.resolved_layers(model);
  const auto net = unet_predictor(p.weights);
  p.content = invert_with_capture(content, net, steps, p.schedule, CacheRole::Content, layers);
  p.style = invert_with_capture(style, net, steps, p.schedule, CacheRole::Style, layers);
  p.invert_s = seconds_since(t0);
  return p;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_stylize(const StylizeFlags& flags, std::ostream& out) {
  const auto t0 = Clock::now();
  const StylizeRun r = flags.resolve();
  auto p = prepare(r);
  const auto t1 = Clock::now();
  const auto z = stylize_from_inversions(p.content, p.style, unet_predictor(p.weights), p.schedule, r.config,
                                         p.weights.config);
  const double sample_s = seconds_since(t1);
  const TensorF image = to_output_image(z);
  write_png(r.out, image);

  json side{{"command", "stylize"},
            {"config", run_json(r)},
            {"timings", {{"load_s", p.load_s}, {"invert_s", p.invert_s}, {"sample_s", sample_s},
                         {"total_s", seconds_since(t0)}}}};
  write_text_file(sidecar_path(r.out), side.dump(2) + "\n");
  out << "wrote " << r.out << " (" << std::fixed << std::setprecision(2) << seconds_since(t0) << " s)\n";
  return kOk;
}

int cmd_diagnose(const StylizeFlags& flags, std::ostream& out) {
  const StylizeRun r = flags.resolve();
  auto p = prepare(r);
  const auto net = unet_predictor(p.weights);
  const fs::path dir(r.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const auto rows = attention_std_report(p.content, p.style, net, p.schedule, r.config, p.weights.config);
  std::ostringstream std_csv;
  std_csv << std::setprecision(9) << "timestep,no_injection,injected_tau_1,injected_tau_scaled\n";
  double ratio_1 = 0, ratio_tau = 0;
  for (const auto& row : rows) {
    std_csv << row.timestep << "," << row.no_injection << "," << row.injected << "," << row.scaled << "\n";
    ratio_1 += row.injected / row.no_injection;
    ratio_tau += row.scaled / row.no_injection;
  }
  ratio_1 /= static_cast<double>(rows.size());
  ratio_tau /= static_cast<double>(rows.size());
  write_text_file(dir / "attention_std.csv", std_csv.str());

  std::ostringstream sweep_csv;
  sweep_csv << std::setprecision(9) << "gamma,cfsd,hist_loss\n";
  const auto style_hist = rgb_uv_histogram(p.style_unit);
  for (int g = 10; g >= 3; --g) {
    StyleIdConfig c = r.config;
    c.gamma = g / 10.0;
    const auto image =
        to_output_image(stylize_from_inversions(p.content, p.style, net, p.schedule, c, p.weights.config));
    sweep_csv << c.gamma << "," << cfsd(p.content_unit, image) << ","
              << histogram_loss(rgb_uv_histogram(image), style_hist) << "\n";
  }
  write_text_file(dir / "gamma_sweep.csv", sweep_csv.str());

  json summary{{"command", "diagnose"},
               {"config", run_json(r)},
               {"mean_std_ratio_tau_1", ratio_1},
               {"mean_std_ratio_tau", ratio_tau},
               {"outputs", {"attention_std.csv", "gamma_sweep.csv"}}};
  write_text_file(dir / "diagnose.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return kOk;
}

struct EvaluateFlags {
  std::string triplets;
  std::string report;
};

int cmd_evaluate(const EvaluateFlags& flags, std::ostream& out) {
  const fs::path manifest_path(flags.triplets);
  const json manifest = read_json_file(manifest_path);
  const json list = manifest.is_array() ? manifest : manifest.value("triplets", json::array());
  if (!list.is_array() || list.empty()) throw ConfigError("triplet manifest has no entries");
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const json& entry, const char* key) {
    if (!entry.contains(key) || !entry.at(key).is_string()) {
      throw ConfigError(std::string("triplet entry lacks string field '") + key + "'");
    }
    const fs::path p(entry.at(key).get<std::string>());
    return p.is_absolute() ? p : base / p;
  };
  auto echo = [&](const json& entry, const fs::path& stylized, const char* key) -> json {
    if (entry.contains(key)) return entry.at(key);
    if (manifest.is_object() && manifest.contains(key)) return manifest.at(key);
    const fs::path side = sidecar_path(stylized);
    if (fs::exists(side)) {
      const json s = read_json_file(side);
      if (s.contains("config") && s.at("config").contains(key)) return s.at("config").at(key);
    }
    return nullptr;
  };

  std::ostringstream report;
  double sum_cfsd = 0, sum_hist = 0;
  for (const auto& entry : list) {
    const fs::path c = resolve(entry, "content"), s = resolve(entry, "style"), cs = resolve(entry, "stylized");
    const TensorF stylized = read_png(cs);
    const TensorF content = resize_bicubic(read_png(c), stylized.dim(1), stylized.dim(2));
    const TensorF style = read_png(s);
    const double cf = cfsd(content, stylized);
    const double hl = histogram_loss(rgb_uv_histogram(stylized), rgb_uv_histogram(style));
    sum_cfsd += cf;
    sum_hist += hl;
    json line{{"content", entry.at("content")}, {"style", entry.at("style")}, {"stylized", entry.at("stylized")},
              {"cfsd", cf}, {"hist_loss", hl}, {"gamma", echo(entry, cs, "gamma")}, {"tau", echo(entry, cs, "tau")}};
    report << line.dump() << "\n";
  }
  write_text_file(flags.report, report.str());
  const auto n = static_cast<double>(list.size());
  json summary{{"command", "evaluate"},
               {"config", {{"triplets", flags.triplets}, {"report", flags.report}}},
               {"count", list.size()},
               {"mean_cfsd", sum_cfsd / n},
               {"mean_hist_loss", sum_hist / n}};
  write_text_file(flags.report + ".summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return kOk;
}

struct TrainFlags {
  std::string config_file;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> checkpoint, loss_csv;
};

TrainConfig load_train_config(const std::string& path) {
  try {
    return read_json_file(path).get<TrainConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("train config '" + path + "': " + e.what());
  }
}

int cmd_train(const TrainFlags& flags, std::ostream& out) {
  TrainConfig c = load_train_config(flags.config_file);
  if (flags.steps) c.steps = *flags.steps;
  if (flags.seed) c.seed = *flags.seed;
  if (flags.checkpoint) c.checkpoint = *flags.checkpoint;
  if (flags.loss_csv) c.loss_csv = *flags.loss_csv;
  out << "training " << c.steps << " steps, batch " << c.batch_size << std::endl;
  const auto result = train(c, [&](const EpochRecord& e) {
    out << "epoch " << e.epoch << " step " << e.step << " train " << e.train_loss << " val " << e.val_loss << " ("
        << std::fixed << std::setprecision(0) << e.seconds << " s)" << std::defaultfloat << std::endl;
  });
  if (!c.checkpoint.empty()) {
    json echo{{"command", "train"}, {"config", c}, {"initial_val_loss", result.initial_val_loss}};
    if (!result.history.empty()) echo["final_val_loss"] = result.history.back().val_loss;
    write_text_file(sidecar_path(c.checkpoint), echo.dump(2) + "\n");
    out << "wrote " << c.checkpoint << "\n";
  }
  return kOk;
}

struct GenerateFlags {
  std::optional<std::string> config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_generate(const GenerateFlags& flags, std::ostream& out) {
  ProceduralSpec spec = flags.config_file ? load_train_config(*flags.config_file).data : ProceduralSpec{};
  if (flags.seed) spec.seed = *flags.seed;
  write_dataset(generate_dataset(spec), spec, flags.out);
  out << "wrote dataset to " << flags.out << "\n";
  return kOk;
}

int report(std::ostream& err, int code, const char* category, const std::string& message) {
  std::string line = message;
  for (char& ch : line) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  err << "error[" << category << "]: " << line << "\n";
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-free style transfer with a toy diffusion model", "styleid"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train the toy U-Net from a JSON config");
  train_cmd->add_option("--config", train_flags.config_file, "Training config (JSON)")->required();
  train_cmd->add_option("--steps", train_flags.steps, "Override optimiser steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train_flags.seed, "Override seed");
  train_cmd->add_option("--checkpoint", train_flags.checkpoint, "Override checkpoint path");
  train_cmd->add_option("--loss-csv", train_flags.loss_csv, "Override loss curve path");

  GenerateFlags gen_flags;
  auto* gen_cmd = app.add_subcommand("generate", "Write the procedural dataset as PNG files");
  gen_cmd->add_option("--config", gen_flags.config_file, "Training config whose data section to use");
  gen_cmd->add_option("--seed", gen_flags.seed, "Override dataset seed");
  gen_cmd->add_option("--out", gen_flags.out, "Output directory")->required();

  StylizeFlags stylize_flags;
  auto* stylize_cmd = app.add_subcommand("stylize", "Stylise one content image with one style image");
  stylize_flags.add_to(stylize_cmd, "Output PNG; settings and timings go to <out>.json", true);

  EvaluateFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute CFSD and histogram loss for stylised triplets");
  eval_cmd->add_option("--triplets", eval_flags.triplets, "JSON manifest of {content, style, stylized}")->required();
  eval_cmd->add_option("--out", eval_flags.report, "JSON-lines report path")->required();

  StylizeFlags diag_flags;
  auto* diag_cmd = app.add_subcommand("diagnose", "Attention std table and gamma sweep for one pair");
  diag_flags.add_to(diag_cmd, "Output directory", true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report(err, kUsage, "usage", e.what());
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*gen_cmd) return cmd_generate(gen_flags, out);
    if (*stylize_cmd) return cmd_stylize(stylize_flags, out);
    if (*eval_cmd) return cmd_evaluate(eval_flags, out);
    if (*diag_cmd) return cmd_diagnose(diag_flags, out);
  } catch (const ConfigError& e) {
    return report(err, kUsage, "usage", e.what());
  } catch (const RangeError& e) {
    return report(err, kUsage, "usage", e.what());
  } catch (const IoError& e) {
    return report(err, kIo, "io", e.what());
  } catch (const NumericError& e) {
    return report(err, kNumeric, "numeric", e.what());
  } catch (const NormalizationError& e) {
    return report(err, kNumeric, "numeric", e.what());
  } catch (const std::exception& e) {
    return report(err, kInternal, "internal", e.what());
  }
  return report(err, kUsage, "usage", "no command given");
}

}  // namespace styleid::cli
