// SPDX-License-Identifier: Apache-2.0
//
// The three variational document models and their objective.
//
//   encoder   t1 = ReLU(W1 d + b1),  t2 = ReLU(W2 t1 + b2)
//             mu = W3 t2 + b3,       log sigma = W4 t2 + b4  (clamped to [-10, 10])
//             VDSH-SP adds private heads W3p/b3p, W4p/b4p on the same t2.
//   latent    s = mu + eps * sigma   (v likewise for VDSH-SP)
//   words     logits = -G^T z + b_w, z = s (or s + v), scored by raw counts
//   labels    f = U s + c, Bernoulli per label (VDSH-S, VDSH-SP)
//
// elbo() returns (1/M) sum_m [word_ll + label_ll] - KL(s) [- KL(v)].
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vdsh/corpus.hpp"
#include "vdsh/mathcore.hpp"

namespace vdsh::model {

enum class Variant : std::uint8_t { Vdsh = 0, VdshS = 1, VdshSP = 2 };

Variant parse_variant(std::string_view name);  // "vdsh", "vdsh-s", "vdsh-sp"
std::string_view to_string(Variant variant);
bool is_supervised(Variant variant);

enum class ParamId : std::uint8_t {
  W1, b1, W2, b2, W3, b3, W4, b4, G, bw, U, c, W3p, b3p, W4p, b4p,
};
inline constexpr std::size_t kNumParams = 16;
std::string_view param_name(ParamId id);
bool uses_param(Variant variant, ParamId id);

struct Dims {
  std::uint32_t K = 0;  // latent size = code bits
  std::uint32_t V = 0;  // vocabulary
  std::uint32_t D = 0;  // hidden units
  std::uint32_t L = 0;  // labels

  friend bool operator==(const Dims&, const Dims&) = default;
};

// One tensor slot per ParamId; slots the variant does not use stay empty.
// Bias vectors are stored as n x 1 matrices. Used for weights, gradients and
// optimizer moments alike.
class ParamSet {
 public:
  math::Matrix& operator[](ParamId id) { return tensors_[static_cast<std::size_t>(id)]; }
  const math::Matrix& operator[](ParamId id) const {
    return tensors_[static_cast<std::size_t>(id)];
  }
  bool has(ParamId id) const { return !(*this)[id].empty(); }

  std::size_t num_values() const;
  void set_zero();
  ParamSet zeros_like() const;
  void add_scaled(const ParamSet& other, double scale);
  void scale(double factor);
  double squared_norm() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::array<math::Matrix, kNumParams> tensors_;
};

// Shape of a parameter under the given dimensions.
std::pair<std::size_t, std::size_t> param_shape(ParamId id, const Dims& dims);

struct ModelParams {
  Variant variant = Variant::Vdsh;
  Dims dims;
  ParamSet weights;
  // Per-bit training medians of mu, filled in after training.
  std::optional<math::Vector> median_thresholds;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// All slots used by the variant, zero-filled.
ModelParams zero_params(Variant variant, const Dims& dims);
// Glorot-uniform weights, zero biases.
ModelParams init_params(Variant variant, const Dims& dims, math::Rng& rng);
// Throws if shapes disagree with dims/variant or values are non-finite.
void validate(const ModelParams& params);

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 10.0;

struct GaussianPosterior {
  math::Vector mu;
  math::Vector log_sigma;
};

struct Encoding {
  GaussianPosterior shared;
  std::optional<GaussianPosterior> private_part;  // VDSH-SP only
};

// Inverted-dropout masks on t1 (size D) and t2 (size D). Absent in evaluation.
struct DropoutMasks {
  math::Vector hidden1;
  math::Vector hidden2;
};

// Standard-normal noise for one Monte Carlo sample. eps_v only for VDSH-SP.
struct NoiseDraw {
  math::Vector eps_s;
  math::Vector eps_v;
};

struct LatentSample {
  math::Vector s;
  math::Vector epsilon;
};

// A document as seen by the objective. `labels` may be null for VDSH.
struct Observation {
  const math::SparseVector* input = nullptr;
  const corpus::CountVector* counts = nullptr;
  const std::vector<std::uint32_t>* labels = nullptr;
};

inline Observation observe(const corpus::Document& doc) {
  return {&doc.weighted, &doc.counts, &doc.labels};
}

enum class LabelMode : std::uint8_t {
  Full,           // Bernoulli cross-entropy over all L labels
  PositivesOnly,  // only log sigma(f_j) for labels present
};

struct ElboOptions {
  LabelMode label_mode = LabelMode::Full;
};

Encoding encode(const ModelParams& params, const math::SparseVector& input,
                const DropoutMasks* masks = nullptr);

LatentSample reparameterize(const GaussianPosterior& posterior, std::span<const double> epsilon);

double word_log_likelihood(const ModelParams& params, std::span<const double> z,
                           const corpus::CountVector& counts);

double label_log_likelihood(const ModelParams& params, std::span<const double> s,
                            std::span<const std::uint32_t> labels,
                            LabelMode mode = LabelMode::Full);

double kl_to_standard_normal(const GaussianPosterior& posterior);

// Fresh noise for M samples, shaped for the variant.
std::vector<NoiseDraw> draw_noise(const ModelParams& params, std::size_t samples, math::Rng& rng);

double elbo(const ModelParams& params, const Observation& obs, std::span<const NoiseDraw> draws,
            const DropoutMasks* masks = nullptr, const ElboOptions& options = {});

// Adds scale * d(elbo)/d(theta) into `grad` (which must be shaped like
// params.weights) and returns the ELBO value of this observation.
double accumulate_elbo_gradient(const ModelParams& params, const Observation& obs,
                                std::span<const NoiseDraw> draws, const DropoutMasks* masks,
                                double scale, ParamSet& grad, const ElboOptions& options = {});

struct Perturbation {
  std::vector<NoiseDraw> draws;
  std::optional<DropoutMasks> masks;
};

struct GradientResult {
  ParamSet grad;      // gradient of the minibatch-mean ELBO
  double mean_elbo = 0.0;
};

// Exact gradient of the minibatch-mean ELBO for fixed noise and masks.
// Throws DivergenceError naming the first parameter with a non-finite entry.
GradientResult elbo_gradients(const ModelParams& params, std::span<const Observation> batch,
                              std::span<const Perturbation> perturbations,
                              const ElboOptions& options = {});

void require_finite(const ParamSet& set, std::string_view what);

// Evaluation-mode posterior means for corpus.docs[i], i in `indices`.
std::vector<math::Vector> encode_means(const ModelParams& params, const corpus::Corpus& corpus,
                                       std::span<const std::size_t> indices,
                                       unsigned threads = 1);

}  // namespace vdsh::model
