#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vecdraw/augment.hpp"
#include "vecdraw/image.hpp"
#include "vecdraw/objective.hpp"
#include "vecdraw/raster.hpp"
#include "vecdraw/scene.hpp"

namespace vecdraw {

enum class RunMode { strokes, pixels };

/// Per-group Adam learning rates. Points are in normalized canvas units, width
/// in pixels, colours (and raw pixels in pixel mode) in [0,1] units.
struct LearningRates {
  double points = 0.005;
  double width = 0.1;
  double color = 0.02;

  [[nodiscard]] double for_group(ParamGroup g) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// All knobs of one synthesis run. The augmentation copy count lives in
/// augment.n_copies. Learning rates are calibrated against 8 copies: the loss
/// is summed over copies, so the gradient scale grows with the copy count.
struct RunConfig {
  int iterations = 250;
  int strokes = 256;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::strokes;
  bool augment_enabled = true;
  LearningRates lr;
  AdamConfig adam;
  WidthBounds width_bounds;
  int snapshot_every = 0;  // 0 keeps only the first and last state
  PromptSet prompts;
  AugmentConfig augment;
  RasterConfig raster;
  CanvasConfig canvas;

  /// Throws ConfigError. Prompts are checked separately since reconstruction needs none.
  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long t = 0;
  LearningRates lr;

  AdamState() = default;
  AdamState(std::size_t n, const LearningRates& rates) : m(n, 0.0), v(n, 0.0), lr(rates) {}
};

/// One bias-corrected Adam update in place, scalar i using the rate of
/// groups[i]. Throws NumericError on a non-finite gradient (params untouched).
void adam_step(std::span<double> params, std::span<const double> grads,
               std::span<const ParamGroup> groups, AdamState& state, const AdamConfig& config);

struct Snapshot {
  int iteration = 0;           // number of optimizer steps applied
  std::optional<Scene> scene;  // strokes mode only
  ImageTensor image;           // canvas render / raw pixel matrix
};

enum class RunOutcome { completed, transport_failure, numeric_failure };

struct RunArtifacts {
  std::vector<double> loss;       // summed over copies, one per iteration
  std::vector<double> loss_mean;  // divided by the number of copies scored
  std::vector<std::string> series_labels;
  std::vector<std::vector<double>> cosine_series;  // [label][iteration]
  std::vector<Snapshot> snapshots;
  std::optional<Scene> initial_scene;
  std::optional<Scene> final_scene;
  ImageTensor final_image;
  std::vector<double> iteration_seconds;
  std::size_t parameter_count = 0;
  std::string model_id;
  RunOutcome outcome = RunOutcome::completed;
  std::string diagnostic;

  [[nodiscard]] bool ok() const { return outcome == RunOutcome::completed; }
};

/// Number of attempts made for one backend call before a run aborts.
inline constexpr int kBackendAttempts = 3;

/// Render -> augment -> score -> pull back -> Adam -> clamp, `iterations` times.
RunArtifacts run_synthesis(const RunConfig& config, ScoringBackend& backend);

/// Same loop over a raw canvas-sized RGB pixel matrix instead of strokes.
RunArtifacts run_pixel_optimization(const RunConfig& config, ScoringBackend& backend);

/// Fits fresh strokes to `target` under the mean-squared-error objective with
/// augmentation disabled. The canvas takes the target's size. Zero iterations
/// are allowed and return the initial scene.
RunArtifacts reconstruct_scene(const ImageTensor& target, const RunConfig& config);

/// Loop driver shared by the entry points above, exposed for custom objectives.
RunArtifacts run_with_objective(const RunConfig& config, Objective& objective,
                                const std::string& model_id);

}  // namespace vecdraw
