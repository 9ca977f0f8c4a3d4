#include "vecdraw/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vecdraw/error.hpp"
#include "vecdraw/export.hpp"
#include "vecdraw/optim.hpp"
#include "vecdraw/protocol.hpp"

namespace vecdraw::cli {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Options {
  std::vector<std::string> prompts;
  std::vector<std::string> negatives;
  double negative_scale = 0.3;
  int strokes = 256;
  int iterations = 250;
  int augments = 8;
  std::uint64_t seed = 0;
  std::string backend = "mock";
  std::string service_addr;
  double service_timeout_s = 60.0;
  std::string mode = "strokes";
  bool no_augment = false;
  int canvas = 224;
  int snapshot_every = 0;
  std::string out = "vecdraw_out";
  std::string sweep_strokes;
  std::string reconstruct;
  int jobs = 1;

  double lr_points = LearningRates{}.points;
  double lr_width = LearningRates{}.width;
  double lr_color = LearningRates{}.color;
  double width_min = WidthBounds{}.min_px;
  double width_max = WidthBounds{}.max_px;
  double distortion_scale = AugmentConfig{}.distortion_scale;
  double crop_scale_min = AugmentConfig{}.crop_scale_range.first;
  double crop_scale_max = AugmentConfig{}.crop_scale_range.second;
  int augment_size = AugmentConfig{}.out_size;
  int curve_samples = RasterConfig{}.curve_samples_per_stroke;
  double antialias_width = RasterConfig{}.antialias_width_px;
};

/// "text" or "text:weight"; the suffix only counts when it parses as a number.
WeightedPrompt parse_prompt(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon != std::string::npos && colon > 0 && colon + 1 < spec.size()) {
    double w = 0.0;
    const char* first = spec.data() + colon + 1;
    const char* last = spec.data() + spec.size();
    const auto res = std::from_chars(first, last, w);
    if (res.ec == std::errc{} && res.ptr == last) return {spec.substr(0, colon), w};
  }
  return {spec, 1.0};
}

std::vector<int> parse_int_list(const std::string& list) {
  std::vector<int> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    int v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size() || v < 1) {
      throw ConfigError("invalid stroke count \"" + item + "\" in --sweep-strokes");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--sweep-strokes needs at least one stroke count");
  return out;
}

RunConfig make_config(const Options& o) {
  RunConfig cfg;
  cfg.iterations = o.iterations;
  cfg.strokes = o.strokes;
  cfg.seed = o.seed;
  if (o.mode == "strokes") {
    cfg.mode = RunMode::strokes;
  } else if (o.mode == "pixels") {
    cfg.mode = RunMode::pixels;
  } else {
    throw ConfigError("--mode must be strokes or pixels");
  }
  cfg.augment_enabled = !o.no_augment;
  cfg.lr = {o.lr_points, o.lr_width, o.lr_color};
  cfg.width_bounds = {o.width_min, o.width_max};
  cfg.snapshot_every = o.snapshot_every;
  for (const auto& p : o.prompts) cfg.prompts.positives.push_back(parse_prompt(p));
  for (const auto& p : o.negatives) cfg.prompts.negatives.push_back(parse_prompt(p));
  cfg.prompts.negative_scale = o.negative_scale;
  cfg.augment.n_copies = o.augments;
  cfg.augment.distortion_scale = o.distortion_scale;
  cfg.augment.crop_scale_range = {o.crop_scale_min, o.crop_scale_max};
  cfg.augment.out_size = o.augment_size;
  cfg.raster.curve_samples_per_stroke = o.curve_samples;
  cfg.raster.antialias_width_px = o.antialias_width;
  cfg.canvas.width_px = o.canvas;
  cfg.canvas.height_px = o.canvas;
  return cfg;
}

Json config_json(const RunConfig& c) {
  Json prompts = Json::array();
  for (const auto& p : c.prompts.positives) prompts.push_back({{"text", p.text}, {"weight", p.weight}});
  Json negatives = Json::array();
  for (const auto& p : c.prompts.negatives) negatives.push_back({{"text", p.text}, {"weight", p.weight}});
  return {
      {"iterations", c.iterations},
      {"strokes", c.strokes},
      {"seed", c.seed},
      {"mode", c.mode == RunMode::pixels ? "pixels" : "strokes"},
      {"augment_enabled", c.augment_enabled},
      {"learning_rates", {{"points", c.lr.points}, {"width", c.lr.width}, {"color", c.lr.color}}},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"width_bounds_px", {c.width_bounds.min_px, c.width_bounds.max_px}},
      {"snapshot_every", c.snapshot_every},
      {"prompts", {{"positives", prompts}, {"negatives", negatives}, {"negative_scale", c.prompts.negative_scale}}},
      {"augment",
       {{"n_copies", c.augment.n_copies},
        {"distortion_scale", c.augment.distortion_scale},
        {"crop_scale_range", {c.augment.crop_scale_range.first, c.augment.crop_scale_range.second}},
        {"crop_aspect_range", {c.augment.crop_aspect_range.first, c.augment.crop_aspect_range.second}},
        {"fill_rgb", c.augment.fill_rgb},
        {"out_size", c.augment.out_size}}},
      {"raster",
       {{"curve_samples_per_stroke", c.raster.curve_samples_per_stroke},
        {"antialias_width_px", c.raster.antialias_width_px}}},
      {"canvas",
       {{"width_px", c.canvas.width_px},
        {"height_px", c.canvas.height_px},
        {"background_rgb", c.canvas.background_rgb}}},
  };
}

const char* outcome_name(RunOutcome o) {
  switch (o) {
    case RunOutcome::completed:
      return "completed";
    case RunOutcome::transport_failure:
      return "transport_failure";
    case RunOutcome::numeric_failure:
      return "numeric_failure";
  }
  return "unknown";
}

int outcome_exit_code(RunOutcome o) {
  switch (o) {
    case RunOutcome::completed:
      return kOk;
    case RunOutcome::transport_failure:
      return kTransport;
    case RunOutcome::numeric_failure:
      return kNumeric;
  }
  return kNumeric;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  write_text_file(probe, "");
  fs::remove(probe, ec);
}

std::string snapshot_name(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%05d.png", iteration);
  return buf;
}

/// Writes the full bundle for one run into `dir`.
void write_bundle(const fs::path& dir, const RunConfig& config, const RunArtifacts& art,
                  const std::string& backend_kind, const std::string& config_text) {
  ensure_dir(dir);
  ensure_dir(dir / "snapshots");
  write_png(dir / "final.png", art.final_image);
  if (art.final_scene) write_text_file(dir / "final.svg", export_svg(*art.final_scene));
  std::vector<ImageTensor> frames;
  for (const Snapshot& s : art.snapshots) {
    write_png(dir / "snapshots" / snapshot_name(s.iteration), s.image);
    frames.push_back(s.image);
  }
  write_png(dir / "filmstrip.png", tile_images(frames, static_cast<int>(frames.size())));
  write_text_file(dir / "loss.csv", loss_csv(art));
  write_text_file(dir / "config.toml", config_text);

  double total = 0.0;
  for (double s : art.iteration_seconds) total += s;
  Json meta{
      {"tool", "vecdraw"},
      {"outcome", outcome_name(art.outcome)},
      {"diagnostic", art.diagnostic},
      {"seed", config.seed},
      {"backend", {{"kind", backend_kind}, {"model", art.model_id}}},
      {"parameter_count", art.parameter_count},
      {"iterations_completed", art.loss.size()},
      {"final_loss", art.loss.empty() ? Json(nullptr) : Json(art.loss.back())},
      {"timing",
       {{"total_seconds", total},
        {"mean_iteration_seconds", art.iteration_seconds.empty() ? 0.0 : total / static_cast<double>(art.iteration_seconds.size())}}},
      {"config", config_json(config)},
  };
  write_text_file(dir / "metadata.json", meta.dump(2) + "\n");
}

std::unique_ptr<ScoringBackend> make_backend(const Options& o) {
  if (o.backend == "mock") return mock_backend(derive_seed(o.seed, "backend"));
  if (o.backend == "service") {
    std::string addr = o.service_addr;
    if (addr.empty()) {
      if (const char* env = std::getenv(protocol::kAddressEnvVar)) addr = env;
    }
    if (addr.empty()) {
      throw ConfigError(std::string("--backend service needs --service-addr or ") +
                        protocol::kAddressEnvVar);
    }
    return protocol::connect(protocol::ServiceAddress::parse(addr), o.service_timeout_s);
  }
  throw ConfigError("--backend must be mock or service");
}

int run_serve(bool stdio, int port, std::uint64_t seed, bool echo) {
  MockBackend backend(seed);
  protocol::ServeOptions opts{echo};
  if (stdio) {
    protocol::FdChannel channel(0, 1, false);
    protocol::serve(channel, backend, opts);
    return kOk;
  }
  protocol::TcpListener listener(port);
  std::cerr << "listening on 127.0.0.1:" << listener.port() << std::endl;
  for (;;) {
    auto channel = listener.accept();
    protocol::serve(*channel, backend, opts);
  }
}

int synthesize(const Options& o, const std::string& config_text) {
  const RunConfig base = make_config(o);
  const fs::path out(o.out);

  if (!o.reconstruct.empty()) {
    const ImageTensor target = read_png(o.reconstruct);
    ensure_dir(out);
    const RunArtifacts art = reconstruct_scene(target, base);
    RunConfig resolved = base;
    resolved.canvas.width_px = target.width();
    resolved.canvas.height_px = target.height();
    resolved.augment_enabled = false;
    write_bundle(out, resolved, art, "pixel-mse", config_text);
    if (!art.ok()) std::cerr << "run aborted: " << art.diagnostic << "\n";
    return outcome_exit_code(art.outcome);
  }

  if (base.prompts.positives.empty()) {
    throw ConfigError("at least one --prompt is required (or use --reconstruct)");
  }
  base.validate();
  base.prompts.validate();
  ensure_dir(out);

  if (o.sweep_strokes.empty()) {
    auto backend = make_backend(o);
    const RunArtifacts art = run_synthesis(base, *backend);
    write_bundle(out, base, art, o.backend, config_text);
    if (!art.ok()) std::cerr << "run aborted: " << art.diagnostic << "\n";
    return outcome_exit_code(art.outcome);
  }

  const std::vector<int> counts = parse_int_list(o.sweep_strokes);
  std::vector<RunArtifacts> results(counts.size());
  std::vector<std::exception_ptr> errors(counts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < counts.size(); i = next++) {
      try {
        RunConfig cfg = base;
        cfg.strokes = counts[i];
        auto backend = make_backend(o);
        results[i] = run_synthesis(cfg, *backend);
        write_bundle(out / ("strokes_" + std::to_string(counts[i])), cfg, results[i], o.backend,
                     config_text);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int jobs = std::clamp(o.jobs, 1, static_cast<int>(counts.size()));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<ImageTensor> finals;
  int code = kOk;
  for (const auto& r : results) {
    finals.push_back(r.final_image);
    if (!r.ok() && code == kOk) {
      code = outcome_exit_code(r.outcome);
      std::cerr << "run aborted: " << r.diagnostic << "\n";
    }
  }
  write_png(out / "contact_sheet.png", tile_images(finals, static_cast<int>(finals.size())));
  return code;
}

/// Drops serve-mock keys and options left unset, so that reading the file back
/// does not turn an absent list into one empty entry.
std::string strip_subcommand_keys(const std::string& text) {
  std::istringstream in(text);
  std::string out, pending;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line.front() == '#') {
      pending += line + '\n';
      continue;
    }
    if (!line.starts_with("serve-mock.") && !line.ends_with("=\"\"")) out += pending + line + '\n';
    pending.clear();
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  Options o;
  CLI::App app{"Optimize Bezier strokes so a drawing matches text prompts", "vecdraw"};
  app.set_config("--config", "", "Read options from a TOML file; command-line flags take precedence");

  app.add_option("--prompt", o.prompts, "Positive prompt, optionally \"text:weight\"")->take_all();
  app.add_option("--negative", o.negatives, "Negative prompt, optionally \"text:weight\"")->take_all();
  app.add_option("--negative-scale", o.negative_scale, "Multiplier on negative prompt weights")->capture_default_str();
  app.add_option("--strokes", o.strokes, "Number of strokes")->capture_default_str();
  app.add_option("--iters", o.iterations, "Optimization steps")->capture_default_str();
  app.add_option("--augments", o.augments, "Augmented copies per step")->capture_default_str();
  app.add_option("--seed", o.seed, "Root random seed")->capture_default_str();
  app.add_option("--backend", o.backend, "Scoring backend")->check(CLI::IsMember({"mock", "service"}))->capture_default_str();
  app.add_option("--service-addr", o.service_addr, "host:port or stdio:<command>; defaults to $VECDRAW_SERVICE_ADDR");
  app.add_option("--service-timeout", o.service_timeout_s, "Per-request timeout in seconds")->capture_default_str();
  app.add_option("--mode", o.mode, "Optimize strokes or raw pixels")->check(CLI::IsMember({"strokes", "pixels"}))->capture_default_str();
  app.add_flag("--no-augment", o.no_augment, "Score the rendered canvas directly");
  app.add_option("--canvas", o.canvas, "Square canvas side in pixels")->capture_default_str();
  app.add_option("--snapshot-every", o.snapshot_every, "Snapshot cadence in steps (0: first and last only)")->capture_default_str();
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--sweep-strokes", o.sweep_strokes, "Comma-separated stroke counts, one run each");
  app.add_option("--reconstruct", o.reconstruct, "Fit strokes to this PNG instead of prompts");
  app.add_option("--jobs", o.jobs, "Parallel runs during a sweep")->capture_default_str();
  app.add_option("--lr-points", o.lr_points, "Learning rate for control points (canvas units)")->capture_default_str();
  app.add_option("--lr-width", o.lr_width, "Learning rate for widths (px)")->capture_default_str();
  app.add_option("--lr-color", o.lr_color, "Learning rate for colours")->capture_default_str();
  app.add_option("--width-min", o.width_min, "Minimum stroke width (px)")->capture_default_str();
  app.add_option("--width-max", o.width_max, "Maximum stroke width (px)")->capture_default_str();
  app.add_option("--distortion-scale", o.distortion_scale, "Perspective distortion strength")->capture_default_str();
  app.add_option("--crop-scale-min", o.crop_scale_min, "Smallest crop area fraction")->capture_default_str();
  app.add_option("--crop-scale-max", o.crop_scale_max, "Largest crop area fraction")->capture_default_str();
  app.add_option("--augment-size", o.augment_size, "Side of augmented copies in pixels")->capture_default_str();
  app.add_option("--curve-samples", o.curve_samples, "Curve samples per stroke seeding the closest-point search")->capture_default_str();
  app.add_option("--aa-width", o.antialias_width, "Antialiasing edge width (px): inverse slope of the coverage profile")->capture_default_str();

  bool serve_stdio = false;
  int serve_port = 0;
  std::uint64_t serve_seed = 0;
  bool serve_echo = false;
  CLI::App* serve = app.add_subcommand("serve-mock", "Serve the mock encoder over the scoring protocol");
  serve->configurable(false);
  serve->add_flag("--stdio", serve_stdio, "Speak the protocol on stdin/stdout");
  serve->add_option("--port", serve_port, "TCP port on 127.0.0.1 (0 picks one)");
  serve->add_option("--seed", serve_seed, "Mock backend seed");
  serve->add_flag("--echo", serve_echo, "Enable the echo debug op");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (serve->parsed()) return run_serve(serve_stdio, serve_port, serve_seed, serve_echo);
    return synthesize(o, strip_subcommand_keys(app.config_to_str(true, true)));
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kTransport;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kTransport;
  } catch (const RemoteError& e) {
    std::cerr << "service error: " << e.what() << "\n";
    return kTransport;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace vecdraw::cli
