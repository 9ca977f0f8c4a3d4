// Acceptance suite: one PASS/FAIL line per criterion, mock backend only.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vecdraw/augment.hpp"
#include "vecdraw/export.hpp"
#include "vecdraw/objective.hpp"
#include "vecdraw/optim.hpp"
#include "vecdraw/raster.hpp"

using namespace vecdraw;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mse(const ImageTensor& a, const ImageTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data().size());
}

double channel_mean_abs_diff(const ImageTensor& a, const ImageTensor& b, int c) {
  double s = 0.0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) s += std::abs(a.at(y, x, c) - b.at(y, x, c));
  }
  return s / (static_cast<double>(a.height()) * a.width());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double plain_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

RunConfig prompt_config(int canvas, int strokes, int iterations, std::uint64_t seed,
                        const std::string& prompt) {
  RunConfig cfg;
  cfg.canvas.width_px = canvas;
  cfg.canvas.height_px = canvas;
  cfg.strokes = strokes;
  cfg.iterations = iterations;
  cfg.seed = seed;
  cfg.prompts.positives.push_back({prompt, 1.0});
  return cfg;
}

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  testing::GradientCheck total;
  constexpr int kScenes = 40;
  for (int i = 0; i < kScenes; ++i) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const Scene s = testing::random_scene(rng, n, 32);
    const RasterConfig cfg;
    const ImageTensor probe = testing::random_image(rng, 32, 32, -1.0, 1.0);
    const auto [x, layout] = scene_to_params(s);
    auto f = [&](const std::vector<double>& p) {
      return dot(render(params_to_scene(p, layout, s.canvas), cfg), probe);
    };
    total.merge(testing::compare_gradient(f, x, render_pullback(s, cfg, probe), 1e-3, 1e-2, 1e-6));
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << kScenes << " scenes, " << total.passed << "/" << total.checked
    << " coordinates within 1e-2 (" << 100.0 * total.pass_fraction() << "%), " << secs << " s";
  return {total.checked > 0 && total.pass_fraction() >= 0.95 && secs < 120.0, d.str()};
}

Verdict rendering_oracle() {
  Rng rng(99);
  RasterConfig cfg;
  cfg.supersample_factor = 16;
  double worst = 0.0;
  constexpr int kScenes = 20;
  for (int i = 0; i < kScenes; ++i) {
    const Scene s = testing::random_scene(rng, 4, 64);
    const ImageTensor fast = render(s, cfg);
    const ImageTensor ref = reference_render(s, cfg);
    for (int c = 0; c < 3; ++c) worst = std::max(worst, channel_mean_abs_diff(fast, ref, c));
  }
  std::ostringstream d;
  d << kScenes << " scenes, worst per-channel mean abs diff " << worst;
  return {worst < 0.02, d.str()};
}

Verdict augmentation_adjoint() {
  Rng rng(5);
  AugmentConfig cfg;
  cfg.out_size = 32;
  cfg.n_copies = 16;
  const auto hs = sample_augmentations(cfg, 32, 32, rng);
  double worst = 0.0;
  for (const Homography& h : hs) {
    const ImageTensor x = testing::random_image(rng, 32, 32, -1.0, 1.0);
    const ImageTensor g = testing::random_image(rng, 32, 32, -1.0, 1.0);
    // warp is affine in X because of the fill colour; a zero fill isolates the linear part.
    const std::array<double, 3> zero{0, 0, 0};
    const double lhs = dot(warp_image(x, h, 32, zero), g);
    const double rhs = dot(x, warp_pullback(32, 32, h, 32, g));
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300}));
  }

  AugmentConfig identity;
  identity.out_size = 32;
  identity.n_copies = 3;
  identity.distortion_scale = 0.0;
  identity.crop_scale_range = {1.0, 1.0};
  identity.crop_aspect_range = {1.0, 1.0};
  const auto ids = sample_augmentations(identity, 32, 32, rng);
  const ImageTensor img = testing::random_image(rng, 32, 32);
  const auto copies = augment_batch(img, ids, identity);
  bool noop = copies.size() == 3;
  for (const ImageTensor& c : copies) noop = noop && c == img;
  const ImageTensor g = testing::random_image(rng, 32, 32, -1.0, 1.0);
  noop = noop && warp_pullback(32, 32, ids[0], 32, g) == g;

  std::ostringstream d;
  d << hs.size() << " random warps, worst relative dot-product error " << worst
    << "; identity config " << (noop ? "is" : "is not") << " an exact no-op";
  return {worst < 1e-5 && noop, d.str()};
}

Verdict reconstruction() {
  const auto t0 = Clock::now();
  const CanvasConfig canvas{64, 64, {1.0, 1.0, 1.0}};
  Rng hidden_rng(31337);
  const Scene hidden = init_scene(64, canvas, hidden_rng);
  const ImageTensor target = render(hidden, RasterConfig{});

  RunConfig cfg;
  cfg.canvas = canvas;
  cfg.strokes = 64;
  cfg.iterations = 500;
  cfg.seed = 7;
  const RunArtifacts art = reconstruct_scene(target, cfg);
  if (!art.ok()) return {false, "run failed: " + art.diagnostic};
  const double initial = mse(render(*art.initial_scene, cfg.raster), target);
  const double final = mse(render(*art.final_scene, cfg.raster), target);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "initial MSE " << initial << ", final MSE " << final << " (ratio " << final / initial
    << "), " << secs << " s";
  return {final < 0.25 * initial && secs < 600.0, d.str()};
}

Verdict loop_fidelity() {
  RunConfig cfg = prompt_config(64, 16, 20, 3, "a lighthouse at dusk");
  cfg.augment_enabled = false;
  cfg.augment.n_copies = 1;
  cfg.snapshot_every = 1;
  MockBackend backend(11);
  const RunArtifacts art = run_synthesis(cfg, backend);
  if (!art.ok()) return {false, "run failed: " + art.diagnostic};

  MockBackend oracle(11);
  const std::vector<std::string> text{"a lighthouse at dusk"};
  const Embedding e_text = oracle.encode_text(text)[0];
  double worst = 0.0;
  std::size_t compared = 0;
  for (const Snapshot& snap : art.snapshots) {
    if (snap.iteration >= cfg.iterations) continue;
    const std::vector<ImageTensor> img{render(*snap.scene, cfg.raster)};
    const double c = plain_cosine(e_text, oracle.encode_images(img)[0]);
    worst = std::max(worst, std::abs(art.loss[static_cast<std::size_t>(snap.iteration)] + c));
    ++compared;
  }
  std::ostringstream d;
  d << compared << " iterations, max |loss + cos| " << worst;
  return {compared == static_cast<std::size_t>(cfg.iterations) && worst < 1e-6, d.str()};
}

Verdict mock_synthesis() {
  const auto t0 = Clock::now();
  RunConfig cfg = prompt_config(128, 64, 250, 42, "a red bicycle");
  cfg.augment.n_copies = 8;
  MockBackend b1(1), b2(1);
  const RunArtifacts a = run_synthesis(cfg, b1);
  const RunArtifacts b = run_synthesis(cfg, b2);
  if (!a.ok() || !b.ok()) return {false, "run failed: " + a.diagnostic + b.diagnostic};
  if (a.loss.size() != 250 || b.loss.size() != 250) return {false, "loss curve has the wrong length"};
  const double early = median({a.loss.begin(), a.loss.begin() + 50});
  const double late = median({a.loss.begin() + 200, a.loss.end()});
  double spread = 0.0;
  for (std::size_t i = 0; i < a.loss.size(); ++i) spread = std::max(spread, std::abs(a.loss[i] - b.loss[i]));
  std::ostringstream d;
  d << "median loss 0-50 " << early << ", 200-250 " << late << ", equal-seed max diff " << spread
    << ", " << seconds_since(t0) << " s for two runs";
  return {late < early && spread <= 1e-6, d.str()};
}

Verdict negative_composition() {
  MockBackend backend(8);
  Rng rng(8);
  std::vector<ImageTensor> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(testing::random_image(rng, 64, 64));

  PromptSet set;
  set.positives.push_back({"a snowy mountain", 1.0});
  set.negatives.push_back({"fog", 1.0});
  set.negative_scale = 0.3;
  const CompiledPrompts compiled = compile_prompts(set, backend);
  const ScoreResult scored = backend.score_images(batch, compiled);

  MockBackend oracle(8);
  const std::vector<std::string> pos{"a snowy mountain"};
  const std::vector<std::string> neg{"fog"};
  const Embedding t_pos = oracle.encode_text(pos)[0];
  const Embedding t_neg = oracle.encode_text(neg)[0];
  double expected = 0.0;
  for (const Embedding& e : oracle.encode_images(batch)) {
    expected += -plain_cosine(e, t_pos) + 0.3 * plain_cosine(e, t_neg);
  }
  const double err = std::abs(scored.report.loss - expected);
  std::ostringstream d;
  d << "loss " << scored.report.loss << ", recomposed " << expected << ", diff " << err;
  return {err < 1e-6, d.str()};
}

Verdict pixel_mode() {
  RunConfig cfg = prompt_config(224, 1, 100, 9, "a bowl of oranges");
  cfg.mode = RunMode::pixels;
  cfg.snapshot_every = 0;
  MockBackend backend(12);
  const RunArtifacts art = run_pixel_optimization(cfg, backend);
  if (!art.ok()) return {false, "run failed: " + art.diagnostic};

  MockBackend oracle(12);
  const std::vector<std::string> text{"a bowl of oranges"};
  const Embedding t = oracle.encode_text(text)[0];
  const std::vector<ImageTensor> first{art.snapshots.front().image};
  const std::vector<ImageTensor> last{art.final_image};
  const double c0 = plain_cosine(oracle.encode_images(first)[0], t);
  const double c1 = plain_cosine(oracle.encode_images(last)[0], t);
  std::ostringstream d;
  d << art.parameter_count << " parameters, cosine " << c0 << " -> " << c1 << " over "
    << art.loss.size() << " iterations";
  return {art.parameter_count == 150528 && art.loss.size() == 100 && c1 > c0, d.str()};
}

Verdict svg_export() {
  Rng rng(21);
  double worst_raster = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Scene s = testing::random_scene(rng, 4, 48, 3, 4);
    const ImageTensor ours = render(s, RasterConfig{});
    const ImageTensor theirs = testing::rasterize_svg_independently(export_svg(s));
    for (int c = 0; c < 3; ++c) worst_raster = std::max(worst_raster, channel_mean_abs_diff(ours, theirs, c));
  }

  double worst_fit = 0.0;
  for (int i = 0; i < 30; ++i) {
    std::array<Point, 5> ctrl{};
    Point p{rng.uniform(20, 200), rng.uniform(20, 200)};
    for (Point& c : ctrl) {
      c = p;
      p = p + Point{rng.uniform(-60, 60), rng.uniform(-60, 60)};
    }
    const CubicPieces fit = quartic_to_cubics(ctrl, kQuarticFitTolerancePx);
    for (int k = 0; k <= 200; ++k) {
      const Point q = bezier_point(ctrl, k / 200.0);
      double best = 1e300;
      for (const auto& piece : fit.pieces) {
        for (int j = 0; j <= 400; ++j) {
          const Point r = bezier_point(piece, j / 400.0);
          best = std::min(best, std::hypot(q.x - r.x, q.y - r.y));
        }
      }
      worst_fit = std::max(worst_fit, best);
    }
  }
  std::ostringstream d;
  d << "worst per-channel mean abs diff " << worst_raster << " over 20 scenes; worst quartic fit "
    << worst_fit << " px over 30 curves";
  return {worst_raster < 0.05 && worst_fit < 0.25, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"rasterizer-gradients", gradient_suite},
      {"rendering-oracle", rendering_oracle},
      {"augmentation-adjoint", augmentation_adjoint},
      {"closed-loop-reconstruction", reconstruction},
      {"loop-fidelity", loop_fidelity},
      {"mock-synthesis", mock_synthesis},
      {"negative-composition", negative_composition},
      {"pixel-mode", pixel_mode},
      {"svg-export", svg_export},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
