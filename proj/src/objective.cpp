#include "vecdraw/objective.hpp"

#include <cmath>
#include <string>

#include "vecdraw/error.hpp"
#include "vecdraw/rng.hpp"

namespace vecdraw {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractError("cosine of vectors with lengths " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()));
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (!(aa > 0.0) || !(bb > 0.0)) throw DomainError("cosine similarity of a zero vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

void normalize(std::span<double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (!(n2 > 0.0)) throw DomainError("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

void PromptSet::validate() const {
  if (positives.empty()) throw ConfigError("at least one positive prompt is required");
  auto check = [](const WeightedPrompt& p) {
    if (p.text.empty()) throw ConfigError("prompt text must not be empty");
    if (!std::isfinite(p.weight) || !(p.weight > 0.0)) {
      throw ConfigError("prompt weight must be finite and positive: \"" + p.text + "\"");
    }
  };
  for (const auto& p : positives) check(p);
  for (const auto& p : negatives) check(p);
  if (!std::isfinite(negative_scale) || negative_scale < 0.0) {
    throw ConfigError("negative_scale must be finite and non-negative");
  }
}

CompiledPrompts compile_prompts(const PromptSet& set, ScoringBackend& backend) {
  set.validate();
  std::vector<std::string> texts;
  for (const auto& p : set.positives) texts.push_back(p.text);
  for (const auto& p : set.negatives) texts.push_back(p.text);
  std::vector<Embedding> emb = backend.encode_text(texts);
  if (emb.size() != texts.size()) throw ProtocolError("backend returned wrong number of text embeddings");

  CompiledPrompts out;
  out.negative_scale = set.negative_scale;
  std::size_t i = 0;
  for (const auto& p : set.positives) out.prompts.push_back({p.text, std::move(emb[i++]), p.weight, false});
  for (const auto& p : set.negatives) out.prompts.push_back({p.text, std::move(emb[i++]), p.weight, true});
  return out;
}

ScoreReport prompt_loss(std::span<const Embedding> image_embeddings,
                        const CompiledPrompts& prompts, std::vector<Embedding>* dl_dembedding) {
  if (image_embeddings.empty()) throw ContractError("empty embedding batch");
  ScoreReport report;
  report.cosines.reserve(prompts.prompts.size());
  for (const auto& p : prompts.prompts) report.cosines.push_back({p.text, p.negative, 0.0});
  if (dl_dembedding != nullptr) {
    dl_dembedding->assign(image_embeddings.size(), Embedding(image_embeddings[0].size(), 0.0));
  }

  const double n_copies = static_cast<double>(image_embeddings.size());
  for (std::size_t d = 0; d < image_embeddings.size(); ++d) {
    const Embedding& e = image_embeddings[d];
    double e2 = 0.0;
    for (double x : e) e2 += x * x;
    const double e_norm = std::sqrt(e2);
    for (std::size_t k = 0; k < prompts.prompts.size(); ++k) {
      const CompiledPrompt& p = prompts.prompts[k];
      const double cos = cosine_similarity(e, p.embedding);
      const double coeff = p.negative ? prompts.negative_scale * p.weight : -p.weight;
      report.loss += coeff * cos;
      report.cosines[k].mean_cosine += cos / n_copies;
      if (dl_dembedding == nullptr) continue;
      // d cos / d e = t / (|e||t|) - cos * e / |e|^2
      double t2 = 0.0;
      for (double x : p.embedding) t2 += x * x;
      const double a = coeff / (e_norm * std::sqrt(t2));
      const double b = coeff * cos / e2;
      Embedding& g = (*dl_dembedding)[d];
      for (std::size_t i = 0; i < e.size(); ++i) g[i] += a * p.embedding[i] - b * e[i];
    }
  }
  report.loss_mean = report.loss / n_copies;
  return report;
}

void validate_batch(std::span<const ImageTensor> batch) {
  if (batch.empty()) throw ContractError("empty image batch");
  for (const ImageTensor& img : batch) {
    if (!img.same_shape(batch[0])) throw ContractError("batch images differ in shape");
    for (double v : img.data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ContractError("batch pixel outside [0,1]");
    }
  }
}

// --- mock backend -----------------------------------------------------------

namespace {

struct PoolBins {
  std::vector<int> row_bin;  // pooled row index per image row
  std::vector<int> col_bin;
  std::vector<double> inv_count;  // 1 / pixels per pooled cell, row-major 16x16
};

PoolBins pool_bins(int height, int width) {
  constexpr int n = MockBackend::kPoolSize;
  if (height < n || width < n) {
    throw ContractError("mock backend needs images of at least 16x16, got " +
                        std::to_string(height) + "x" + std::to_string(width));
  }
  PoolBins bins;
  bins.row_bin.resize(static_cast<std::size_t>(height));
  bins.col_bin.resize(static_cast<std::size_t>(width));
  std::vector<int> rows(n, 0), cols(n, 0);
  // Bin i covers [floor(i*size/16), floor((i+1)*size/16)).
  for (int i = 0; i < n; ++i) {
    for (int y = i * height / n; y < (i + 1) * height / n; ++y) {
      bins.row_bin[static_cast<std::size_t>(y)] = i;
      ++rows[static_cast<std::size_t>(i)];
    }
    for (int x = i * width / n; x < (i + 1) * width / n; ++x) {
      bins.col_bin[static_cast<std::size_t>(x)] = i;
      ++cols[static_cast<std::size_t>(i)];
    }
  }
  bins.inv_count.resize(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      bins.inv_count[static_cast<std::size_t>(i * n + j)] =
          1.0 / (rows[static_cast<std::size_t>(i)] * cols[static_cast<std::size_t>(j)]);
    }
  }
  return bins;
}

}  // namespace

MockBackend::MockBackend(std::uint64_t seed) : seed_(seed) {
  Rng rng = Rng(seed).split("mock-projection");
  projection_.resize(kEmbeddingDim * kPooledDim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kPooledDim));
  for (double& p : projection_) p = rng.normal() * scale;
}

std::string MockBackend::model_id() const {
  return "mock-projection-16x16/seed=" + std::to_string(seed_);
}

std::vector<Embedding> MockBackend::encode_text(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const std::string& text : texts) {
    if (text.empty()) throw ContractError("cannot encode an empty prompt");
    Rng rng(mix64(seed_ ^ stable_hash(text)));
    Embedding e(kEmbeddingDim);
    for (double& x : e) x = rng.normal();
    normalize(e);
    out.push_back(std::move(e));
  }
  return out;
}

MockBackend::Encoded MockBackend::encode(const ImageTensor& img) const {
  const PoolBins bins = pool_bins(img.height(), img.width());
  Encoded enc;
  enc.pooled.assign(kPooledDim, 0.0);
  for (int y = 0; y < img.height(); ++y) {
    const int by = bins.row_bin[static_cast<std::size_t>(y)];
    for (int x = 0; x < img.width(); ++x) {
      const int bx = bins.col_bin[static_cast<std::size_t>(x)];
      const std::size_t cell = static_cast<std::size_t>(by * kPoolSize + bx);
      for (int c = 0; c < 3; ++c) enc.pooled[cell * 3 + static_cast<std::size_t>(c)] += img.at(y, x, c);
    }
  }
  for (std::size_t cell = 0; cell < kPooledDim / 3; ++cell) {
    for (std::size_t c = 0; c < 3; ++c) enc.pooled[cell * 3 + c] *= bins.inv_count[cell];
  }
  enc.projected.assign(kEmbeddingDim, 0.0);
  for (std::size_t r = 0; r < kEmbeddingDim; ++r) {
    const double* row = projection_.data() + r * kPooledDim;
    double s = 0.0;
    for (std::size_t k = 0; k < kPooledDim; ++k) s += row[k] * enc.pooled[k];
    enc.projected[r] = s;
  }
  double n2 = 0.0;
  for (double z : enc.projected) n2 += z * z;
  enc.norm = std::sqrt(n2);
  if (!(enc.norm > 0.0)) throw NumericError("mock image embedding has zero norm");
  enc.embedding = enc.projected;
  for (double& e : enc.embedding) e /= enc.norm;
  return enc;
}

std::vector<Embedding> MockBackend::encode_images(std::span<const ImageTensor> batch) {
  validate_batch(batch);
  std::vector<Embedding> out;
  out.reserve(batch.size());
  for (const ImageTensor& img : batch) out.push_back(encode(img).embedding);
  return out;
}

ScoreResult MockBackend::score_images(std::span<const ImageTensor> batch,
                                      const CompiledPrompts& prompts) {
  validate_batch(batch);
  std::vector<Encoded> encoded;
  std::vector<Embedding> embeddings;
  for (const ImageTensor& img : batch) {
    encoded.push_back(encode(img));
    embeddings.push_back(encoded.back().embedding);
  }
  std::vector<Embedding> g_emb;
  ScoreResult result;
  result.report = prompt_loss(embeddings, prompts, &g_emb);

  const PoolBins bins = pool_bins(batch[0].height(), batch[0].width());
  result.grad.reserve(batch.size());
  for (std::size_t d = 0; d < batch.size(); ++d) {
    const Encoded& enc = encoded[d];
    const Embedding& ge = g_emb[d];
    // Through normalization: g_z = (g_e - e (e . g_e)) / |z|.
    double eg = 0.0;
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) eg += enc.embedding[i] * ge[i];
    std::vector<double> gz(kEmbeddingDim);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) gz[i] = (ge[i] - enc.embedding[i] * eg) / enc.norm;
    // Through the projection: g_pooled = P^T g_z.
    std::vector<double> gp(kPooledDim, 0.0);
    for (std::size_t r = 0; r < kEmbeddingDim; ++r) {
      const double* row = projection_.data() + r * kPooledDim;
      for (std::size_t k = 0; k < kPooledDim; ++k) gp[k] += row[k] * gz[r];
    }
    // Through average pooling.
    ImageTensor g(batch[d].height(), batch[d].width());
    for (int y = 0; y < g.height(); ++y) {
      const int by = bins.row_bin[static_cast<std::size_t>(y)];
      for (int x = 0; x < g.width(); ++x) {
        const std::size_t cell =
            static_cast<std::size_t>(by * kPoolSize + bins.col_bin[static_cast<std::size_t>(x)]);
        for (int c = 0; c < 3; ++c) g.at(y, x, c) = gp[cell * 3 + static_cast<std::size_t>(c)] * bins.inv_count[cell];
      }
    }
    result.grad.push_back(std::move(g));
  }
  return result;
}

std::unique_ptr<ScoringBackend> mock_backend(std::uint64_t seed) {
  return std::make_unique<MockBackend>(seed);
}

// --- objectives -------------------------------------------------------------

PromptObjective::PromptObjective(ScoringBackend& backend, CompiledPrompts prompts)
    : backend_(&backend), prompts_(std::move(prompts)) {}

ScoreResult PromptObjective::evaluate(std::span<const ImageTensor> batch) {
  ScoreResult r = backend_->score_images(batch, prompts_);
  if (r.grad.size() != batch.size()) throw ProtocolError("backend returned wrong number of gradients");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!r.grad[i].same_shape(batch[i])) throw ProtocolError("backend gradient shape mismatch");
  }
  return r;
}

std::vector<std::string> PromptObjective::series_labels() const {
  std::vector<std::string> labels;
  for (const auto& p : prompts_.prompts) labels.push_back(p.negative ? "-" + p.text : p.text);
  return labels;
}

PixelTargetObjective::PixelTargetObjective(ImageTensor target) : target_(std::move(target)) {}

ScoreResult PixelTargetObjective::evaluate(std::span<const ImageTensor> batch) {
  if (batch.empty()) throw ContractError("empty image batch");
  ScoreResult result;
  const double m = static_cast<double>(target_.size());
  const double copies = static_cast<double>(batch.size());
  auto t = target_.data();
  for (const ImageTensor& img : batch) {
    if (!img.same_shape(target_)) {
      throw ContractError("target is " + std::to_string(target_.height()) + "x" +
                          std::to_string(target_.width()) + ", image is " +
                          std::to_string(img.height()) + "x" + std::to_string(img.width()));
    }
    ImageTensor g(img.height(), img.width());
    auto gi = g.data();
    auto x = img.data();
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double diff = x[i] - t[i];
      se += diff * diff;
      gi[i] = 2.0 * diff / (m * copies);
    }
    result.report.loss += se / (m * copies);
    result.grad.push_back(std::move(g));
  }
  result.report.loss_mean = result.report.loss;
  return result;
}

}  // namespace vecdraw
