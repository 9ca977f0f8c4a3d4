#include "vecdraw/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include "vecdraw/error.hpp"

namespace vecdraw {

double LearningRates::for_group(ParamGroup g) const {
  switch (g) {
    case ParamGroup::points:
      return points;
    case ParamGroup::width:
      return width;
    case ParamGroup::color:
      return color;
  }
  return 0.0;
}

void RunConfig::validate() const {
  if (iterations < 1) throw ConfigError("iteration count must be at least 1");
  if (strokes < 1) throw ConfigError("stroke count must be at least 1");
  if (snapshot_every < 0) throw ConfigError("snapshot_every must be non-negative");
  if (!(lr.points >= 0.0 && lr.width >= 0.0 && lr.color >= 0.0)) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
        adam.eps > 0.0)) {
    throw ConfigError("Adam betas must lie in [0,1) and eps must be positive");
  }
  if (width_bounds.min_px > width_bounds.max_px) throw ConfigError("width bounds inverted");
  augment.validate();
  raster.validate();
  canvas.validate();
}

void adam_step(std::span<double> params, std::span<const double> grads,
               std::span<const ParamGroup> groups, AdamState& state, const AdamConfig& config) {
  const std::size_t n = params.size();
  if (grads.size() != n || groups.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ContractError("adam_step: parameter, gradient, group and state lengths differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient at parameter " + std::to_string(i) + " (step " +
                         std::to_string(state.t + 1) + ")");
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.lr.for_group(groups[i]) * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

namespace {

/// Maps the flat parameter vector to a canvas image and back.
struct Parametrization {
  std::vector<double> params;
  std::vector<ParamGroup> groups;
  std::function<ImageTensor(std::span<const double>)> to_image;
  std::function<std::vector<double>(std::span<const double>, const ImageTensor&)> pullback;
  std::function<void(std::span<double>)> project;
  std::function<std::optional<Scene>(std::span<const double>)> to_scene;
};

Parametrization stroke_parametrization(const RunConfig& config, Rng& init_rng) {
  Scene initial = init_scene(static_cast<std::size_t>(config.strokes), config.canvas, init_rng);
  auto [params, layout_value] = scene_to_params(initial);
  auto layout = std::make_shared<ParamLayout>(std::move(layout_value));
  Parametrization p;
  p.params = std::move(params);
  p.groups = layout->groups;
  const CanvasConfig canvas = config.canvas;
  const RasterConfig raster = config.raster;
  const WidthBounds bounds = config.width_bounds;
  p.to_scene = [layout, canvas](std::span<const double> x) -> std::optional<Scene> {
    return params_to_scene(x, *layout, canvas);
  };
  p.to_image = [layout, canvas, raster](std::span<const double> x) {
    return render(params_to_scene(x, *layout, canvas), raster);
  };
  p.pullback = [layout, canvas, raster](std::span<const double> x, const ImageTensor& g) {
    return render_pullback(params_to_scene(x, *layout, canvas), raster, g);
  };
  p.project = [layout, bounds](std::span<double> x) { clamp_params_inplace(x, *layout, bounds); };
  return p;
}

Parametrization pixel_parametrization(const RunConfig& config, Rng& init_rng) {
  const int h = config.canvas.height_px;
  const int w = config.canvas.width_px;
  Parametrization p;
  p.params.resize(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3);
  for (double& v : p.params) v = init_rng.uniform();
  p.groups.assign(p.params.size(), ParamGroup::color);
  p.to_scene = [](std::span<const double>) -> std::optional<Scene> { return std::nullopt; };
  p.to_image = [h, w](std::span<const double> x) {
    ImageTensor img(h, w);
    std::copy(x.begin(), x.end(), img.data().begin());
    return img;
  };
  p.pullback = [](std::span<const double>, const ImageTensor& g) {
    return std::vector<double>(g.data().begin(), g.data().end());
  };
  p.project = [](std::span<double> x) {
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
  };
  return p;
}

std::optional<std::pair<std::size_t, std::size_t>> first_non_finite(
    std::span<const ImageTensor> grads) {
  for (std::size_t d = 0; d < grads.size(); ++d) {
    const auto data = grads[d].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(data[i])) return std::pair{d, i};
    }
  }
  return std::nullopt;
}

RunArtifacts drive(const RunConfig& config, Objective& objective, const std::string& model_id,
                   Parametrization param) {
  using Clock = std::chrono::steady_clock;
  Rng aug_rng = Rng(config.seed).split("augment");

  RunArtifacts art;
  art.model_id = model_id;
  art.parameter_count = param.params.size();
  art.series_labels = objective.series_labels();
  art.cosine_series.assign(art.series_labels.size(), {});
  art.initial_scene = param.to_scene(param.params);

  AdamState adam(param.params.size(), config.lr);
  const int h = config.canvas.height_px;
  const int w = config.canvas.width_px;

  auto snapshot = [&](int iteration, const ImageTensor& image) {
    art.snapshots.push_back({iteration, param.to_scene(param.params), image});
  };

  for (int it = 0; it < config.iterations; ++it) {
    const auto start = Clock::now();
    const ImageTensor image = param.to_image(param.params);
    if (it == 0 || (config.snapshot_every > 0 && it % config.snapshot_every == 0)) {
      snapshot(it, image);
    }

    std::vector<Homography> homs;
    std::vector<ImageTensor> batch;
    if (config.augment_enabled) {
      homs = sample_augmentations(config.augment, h, w, aug_rng);
      batch = augment_batch(image, homs, config.augment);
      // Bilinear weights can overshoot [0,1] by an ulp.
      for (ImageTensor& copy : batch) {
        for (double& v : copy.data()) v = std::clamp(v, 0.0, 1.0);
      }
    } else {
      batch.push_back(image);
    }

    ScoreResult scored;
    bool scored_ok = false;
    for (int attempt = 1; attempt <= kBackendAttempts && !scored_ok; ++attempt) {
      try {
        scored = objective.evaluate(batch);
        scored_ok = true;
      } catch (const TransportError& e) {
        art.diagnostic = "iteration " + std::to_string(it) + ", attempt " +
                         std::to_string(attempt) + ": " + e.what();
      }
    }
    if (!scored_ok) {
      art.outcome = RunOutcome::transport_failure;
      break;
    }
    if (!std::isfinite(scored.report.loss)) {
      art.outcome = RunOutcome::numeric_failure;
      art.diagnostic = "non-finite loss at iteration " + std::to_string(it);
      break;
    }
    if (const auto bad = first_non_finite(scored.grad)) {
      art.outcome = RunOutcome::numeric_failure;
      art.diagnostic = "non-finite pixel gradient from the objective at iteration " +
                       std::to_string(it) + " (copy " + std::to_string(bad->first) +
                       ", element " + std::to_string(bad->second) + ")";
      break;
    }
    art.loss.push_back(scored.report.loss);
    art.loss_mean.push_back(scored.report.loss_mean);
    for (std::size_t k = 0; k < art.cosine_series.size() && k < scored.report.cosines.size(); ++k) {
      art.cosine_series[k].push_back(scored.report.cosines[k].mean_cosine);
    }

    const ImageTensor image_grad =
        config.augment_enabled ? augment_pullback(h, w, homs, config.augment, scored.grad)
                               : std::move(scored.grad.at(0));
    const std::vector<double> grads = param.pullback(param.params, image_grad);
    try {
      adam_step(param.params, grads, param.groups, adam, config.adam);
    } catch (const NumericError& e) {
      art.outcome = RunOutcome::numeric_failure;
      art.diagnostic = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    param.project(param.params);
    art.iteration_seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
  }

  art.final_image = param.to_image(param.params);
  art.final_scene = param.to_scene(param.params);
  const int steps = static_cast<int>(adam.t);
  if (art.snapshots.empty() || art.snapshots.back().iteration != steps) {
    snapshot(steps, art.final_image);
  }
  return art;
}

CompiledPrompts compile_with_retry(const PromptSet& prompts, ScoringBackend& backend) {
  for (int attempt = 1;; ++attempt) {
    try {
      return compile_prompts(prompts, backend);
    } catch (const TransportError&) {
      if (attempt >= kBackendAttempts) throw;
    }
  }
}

RunArtifacts run_prompted(const RunConfig& config, ScoringBackend& backend, bool pixels) {
  config.validate();
  config.prompts.validate();
  RunArtifacts failed;
  CompiledPrompts compiled;
  try {
    compiled = compile_with_retry(config.prompts, backend);
  } catch (const TransportError& e) {
    failed.outcome = RunOutcome::transport_failure;
    failed.diagnostic = std::string("encoding prompts: ") + e.what();
    failed.model_id = backend.model_id();
    return failed;
  }
  PromptObjective objective(backend, std::move(compiled));
  Rng init_rng = Rng(config.seed).split("init");
  return drive(config, objective, backend.model_id(),
               pixels ? pixel_parametrization(config, init_rng)
                      : stroke_parametrization(config, init_rng));
}

}  // namespace

RunArtifacts run_with_objective(const RunConfig& config, Objective& objective,
                                const std::string& model_id) {
  config.validate();
  Rng init_rng = Rng(config.seed).split("init");
  return drive(config, objective, model_id,
               config.mode == RunMode::pixels ? pixel_parametrization(config, init_rng)
                                              : stroke_parametrization(config, init_rng));
}

RunArtifacts run_synthesis(const RunConfig& config, ScoringBackend& backend) {
  return run_prompted(config, backend, config.mode == RunMode::pixels);
}

RunArtifacts run_pixel_optimization(const RunConfig& config, ScoringBackend& backend) {
  return run_prompted(config, backend, true);
}

RunArtifacts reconstruct_scene(const ImageTensor& target, const RunConfig& config) {
  RunConfig cfg = config;
  cfg.mode = RunMode::strokes;
  cfg.augment_enabled = false;
  cfg.canvas.width_px = target.width();
  cfg.canvas.height_px = target.height();
  for (double v : target.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("reconstruction target outside [0,1]");
  }
  const bool zero_iterations = cfg.iterations == 0;
  if (zero_iterations) cfg.iterations = 1;
  cfg.validate();
  if (zero_iterations) cfg.iterations = 0;

  PixelTargetObjective objective(target);
  Rng init_rng = Rng(cfg.seed).split("init");
  return drive(cfg, objective, "pixel-mse", stroke_parametrization(cfg, init_rng));
}

}  // namespace vecdraw
