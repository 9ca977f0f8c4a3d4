#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vecdraw/image.hpp"

namespace vecdraw {

inline constexpr std::size_t kEmbeddingDim = 512;

using Embedding = std::vector<double>;

/// a.b / (|a||b|). Throws DomainError for a zero vector, ContractError on
/// length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Scales `v` to unit Euclidean norm in place. Throws DomainError for a zero vector.
void normalize(std::span<double> v);

struct WeightedPrompt {
  std::string text;
  double weight = 1.0;
};

/// Prompts rewarded (positives) and penalized (negatives). Negative weights are
/// additionally multiplied by negative_scale.
struct PromptSet {
  std::vector<WeightedPrompt> positives;
  std::vector<WeightedPrompt> negatives;
  double negative_scale = 0.3;

  void validate() const;
};

struct CompiledPrompt {
  std::string text;
  Embedding embedding;  // unit norm
  double weight = 1.0;
  bool negative = false;
};

struct CompiledPrompts {
  std::vector<CompiledPrompt> prompts;  // positives first, then negatives
  double negative_scale = 0.3;
};

struct PromptCosine {
  std::string prompt;
  bool negative = false;
  double mean_cosine = 0.0;  // averaged over the batch copies
};

/// `loss` is summed over the batch copies; `loss_mean` divides it by the copy count.
struct ScoreReport {
  double loss = 0.0;
  double loss_mean = 0.0;
  std::vector<PromptCosine> cosines;
};

struct ScoreResult {
  ScoreReport report;
  std::vector<ImageTensor> grad;  // dLoss/dcopy, same shapes as the batch
};

/// Loss over per-copy image embeddings:
///   L = -sum_d sum_pos w cos(e_d, t) + scale * sum_d sum_neg w cos(e_d, t)
/// Fills `dl_dembedding` (one vector per copy) when non-null.
ScoreReport prompt_loss(std::span<const Embedding> image_embeddings,
                        const CompiledPrompts& prompts,
                        std::vector<Embedding>* dl_dembedding = nullptr);

/// Text/image encoder plus the loss it is scored with. Implementations may be
/// handed between threads but are not required to support concurrent calls.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;

  [[nodiscard]] virtual std::size_t embedding_dim() const = 0;
  [[nodiscard]] virtual std::string model_id() const = 0;

  virtual std::vector<Embedding> encode_text(std::span<const std::string> texts) = 0;
  virtual std::vector<Embedding> encode_images(std::span<const ImageTensor> batch) = 0;

  /// Loss and exact dLoss/dpixels for a batch of equally sized images in [0,1].
  virtual ScoreResult score_images(std::span<const ImageTensor> batch,
                                   const CompiledPrompts& prompts) = 0;
};

/// Encodes every prompt of `set` through `backend`.
CompiledPrompts compile_prompts(const PromptSet& set, ScoringBackend& backend);

/// Throws ContractError unless the batch is non-empty, equally shaped and in [0,1].
void validate_batch(std::span<const ImageTensor> batch);

/// Deterministic stand-in encoder: images are average-pooled to 16x16x3,
/// projected by a fixed seeded Gaussian 512x768 matrix and normalized; texts map
/// to seeded random unit vectors keyed by a stable hash of the string.
class MockBackend final : public ScoringBackend {
 public:
  static constexpr int kPoolSize = 16;
  static constexpr std::size_t kPooledDim = kPoolSize * kPoolSize * 3;

  explicit MockBackend(std::uint64_t seed);

  [[nodiscard]] std::size_t embedding_dim() const override { return kEmbeddingDim; }
  [[nodiscard]] std::string model_id() const override;
  std::vector<Embedding> encode_text(std::span<const std::string> texts) override;
  std::vector<Embedding> encode_images(std::span<const ImageTensor> batch) override;
  ScoreResult score_images(std::span<const ImageTensor> batch,
                           const CompiledPrompts& prompts) override;

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  struct Encoded {
    std::vector<double> pooled;
    std::vector<double> projected;
    double norm = 0.0;
    Embedding embedding;
  };
  [[nodiscard]] Encoded encode(const ImageTensor& img) const;

  std::uint64_t seed_;
  std::vector<double> projection_;  // row-major kEmbeddingDim x kPooledDim
};

std::unique_ptr<ScoringBackend> mock_backend(std::uint64_t seed);

/// What the optimization loop minimizes: loss and gradient for a batch.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual ScoreResult evaluate(std::span<const ImageTensor> batch) = 0;
  /// Labels of the per-prompt cosine series reported by evaluate().
  [[nodiscard]] virtual std::vector<std::string> series_labels() const = 0;
};

/// Prompt-matching objective backed by a scoring backend.
class PromptObjective final : public Objective {
 public:
  PromptObjective(ScoringBackend& backend, CompiledPrompts prompts);
  ScoreResult evaluate(std::span<const ImageTensor> batch) override;
  [[nodiscard]] std::vector<std::string> series_labels() const override;
  [[nodiscard]] const CompiledPrompts& prompts() const { return prompts_; }

 private:
  ScoringBackend* backend_;
  CompiledPrompts prompts_;
};

/// Encoder-free objective: mean over the batch of the per-copy mean squared
/// error to `target`. Reports no cosine series.
class PixelTargetObjective final : public Objective {
 public:
  explicit PixelTargetObjective(ImageTensor target);
  ScoreResult evaluate(std::span<const ImageTensor> batch) override;
  [[nodiscard]] std::vector<std::string> series_labels() const override { return {}; }
  [[nodiscard]] const ImageTensor& target() const { return target_; }

 private:
  ImageTensor target_;
};

}  // namespace vecdraw
