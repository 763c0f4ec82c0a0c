// SPDX-License-Identifier: Apache-2.0
#include "vdsh/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vdsh/errors.hpp"
#include "vdsh/parallel.hpp"

namespace vdsh::model {

using math::Matrix;
using math::Vector;

namespace {

constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4",
    "G",  "b_w", "U", "c", "W3p", "b3p", "W4p", "b4p",
};

constexpr std::array<ParamId, kNumParams> kAllParams = {
    ParamId::W1, ParamId::b1, ParamId::W2, ParamId::b2,  ParamId::W3,  ParamId::b3,
    ParamId::W4, ParamId::b4, ParamId::G,  ParamId::bw,  ParamId::U,   ParamId::c,
    ParamId::W3p, ParamId::b3p, ParamId::W4p, ParamId::b4p,
};

bool is_bias(ParamId id) {
  switch (id) {
    case ParamId::b1: case ParamId::b2: case ParamId::b3: case ParamId::b4:
    case ParamId::bw: case ParamId::c: case ParamId::b3p: case ParamId::b4p:
      return true;
    default:
      return false;
  }
}

std::span<const double> vec(const Matrix& m) { return m.values(); }
std::span<double> vec(Matrix& m) { return m.values(); }

}  // namespace

Variant parse_variant(std::string_view name) {
  if (name == "vdsh") return Variant::Vdsh;
  if (name == "vdsh-s") return Variant::VdshS;
  if (name == "vdsh-sp") return Variant::VdshSP;
  throw ConfigError("unknown model variant '" + std::string(name) +
                    "' (expected vdsh, vdsh-s or vdsh-sp)");
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::Vdsh: return "vdsh";
    case Variant::VdshS: return "vdsh-s";
    case Variant::VdshSP: return "vdsh-sp";
  }
  return "?";
}

bool is_supervised(Variant variant) { return variant != Variant::Vdsh; }

std::string_view param_name(ParamId id) { return kParamNames[static_cast<std::size_t>(id)]; }

bool uses_param(Variant variant, ParamId id) {
  switch (id) {
    case ParamId::U: case ParamId::c:
      return variant != Variant::Vdsh;
    case ParamId::W3p: case ParamId::b3p: case ParamId::W4p: case ParamId::b4p:
      return variant == Variant::VdshSP;
    default:
      return true;
  }
}

std::pair<std::size_t, std::size_t> param_shape(ParamId id, const Dims& d) {
  switch (id) {
    case ParamId::W1: return {d.D, d.V};
    case ParamId::b1: return {d.D, 1};
    case ParamId::W2: return {d.D, d.D};
    case ParamId::b2: return {d.D, 1};
    case ParamId::W3: case ParamId::W4: case ParamId::W3p: case ParamId::W4p: return {d.K, d.D};
    case ParamId::b3: case ParamId::b4: case ParamId::b3p: case ParamId::b4p: return {d.K, 1};
    case ParamId::G: return {d.K, d.V};
    case ParamId::bw: return {d.V, 1};
    case ParamId::U: return {d.L, d.K};
    case ParamId::c: return {d.L, 1};
  }
  return {0, 0};
}

std::size_t ParamSet::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamSet::set_zero() {
  for (auto& t : tensors_) t.fill(0.0);
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    out.tensors_[i] = Matrix(tensors_[i].rows(), tensors_[i].cols());
  }
  return out;
}

void ParamSet::add_scaled(const ParamSet& other, double scale) {
  for (std::size_t i = 0; i < kNumParams; ++i) {
    auto dst = tensors_[i].values();
    const auto src = other.tensors_[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

void ParamSet::scale(double factor) {
  for (auto& t : tensors_) {
    for (auto& v : t.values()) v *= factor;
  }
}

double ParamSet::squared_norm() const {
  double total = 0.0;
  for (const auto& t : tensors_) {
    for (double v : t.values()) total += v * v;
  }
  return total;
}

ModelParams zero_params(Variant variant, const Dims& dims) {
  if (dims.K < 1 || dims.V < 1 || dims.D < 1) {
    throw ConfigError("model dimensions K, V and D must be positive");
  }
  if (is_supervised(variant) && dims.L < 1) {
    throw ConfigError(std::string(to_string(variant)) + " needs at least one label");
  }
  ModelParams p;
  p.variant = variant;
  p.dims = dims;
  for (auto id : kAllParams) {
    if (!uses_param(variant, id)) continue;
    const auto [r, c] = param_shape(id, dims);
    p.weights[id] = Matrix(r, c);
  }
  return p;
}

ModelParams init_params(Variant variant, const Dims& dims, math::Rng& rng) {
  auto p = zero_params(variant, dims);
  for (auto id : kAllParams) {
    if (!p.weights.has(id) || is_bias(id)) continue;
    const auto [r, c] = param_shape(id, dims);
    p.weights[id] = math::glorot_init(r, c, rng);
  }
  return p;
}

void validate(const ModelParams& params) {
  for (auto id : kAllParams) {
    const bool wanted = uses_param(params.variant, id);
    const auto& t = params.weights[id];
    if (wanted) {
      const auto [r, c] = param_shape(id, params.dims);
      if (t.rows() != r || t.cols() != c) {
        throw DataError("parameter " + std::string(param_name(id)) + " has shape " +
                        std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                        ", expected " + std::to_string(r) + "x" + std::to_string(c));
      }
      math::require_finite(t.values(), param_name(id));
    } else if (!t.empty()) {
      throw DataError("parameter " + std::string(param_name(id)) + " is not used by " +
                      std::string(to_string(params.variant)));
    }
  }
  if (params.median_thresholds && params.median_thresholds->size() != params.dims.K) {
    throw DataError("threshold vector length does not match K");
  }
}

void require_finite(const ParamSet& set, std::string_view what) {
  for (auto id : kAllParams) {
    if (!math::all_finite(set[id].values())) {
      throw DivergenceError("non-finite " + std::string(what) + " for parameter " +
                            std::string(param_name(id)));
    }
  }
}

namespace {

// Forward activations kept for the backward pass.
struct Forward {
  Vector a1, t1, a2, t2;
  Vector mu, ls_raw, ls;
  Vector mu_v, lsv_raw, lsv;
};

Vector clamp_log_sigma(std::span<const double> raw) {
  Vector out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::clamp(raw[i], kLogSigmaMin, kLogSigmaMax);
  }
  return out;
}

void check_input(const ModelParams& params, const math::SparseVector& input) {
  for (const auto& [t, w] : input) {
    if (t >= params.dims.V) {
      throw DataError("input term id " + std::to_string(t) + " exceeds vocabulary size " +
                      std::to_string(params.dims.V));
    }
  }
}

Forward run_encoder(const ModelParams& params, const math::SparseVector& input,
                    const DropoutMasks* masks) {
  check_input(params, input);
  const auto& w = params.weights;
  const auto D = params.dims.D;
  const auto K = params.dims.K;
  if (masks && (masks->hidden1.size() != D || masks->hidden2.size() != D)) {
    throw DataError("dropout mask size does not match hidden size");
  }
  Forward f;
  f.a1.resize(D);
  math::affine_sparse(w[ParamId::W1], input, vec(w[ParamId::b1]), f.a1);
  f.t1 = math::relu_forward(f.a1);
  if (masks) {
    for (std::size_t i = 0; i < D; ++i) f.t1[i] *= masks->hidden1[i];
  }
  f.a2.resize(D);
  math::affine(w[ParamId::W2], f.t1, vec(w[ParamId::b2]), f.a2);
  f.t2 = math::relu_forward(f.a2);
  if (masks) {
    for (std::size_t i = 0; i < D; ++i) f.t2[i] *= masks->hidden2[i];
  }
  f.mu.resize(K);
  f.ls_raw.resize(K);
  math::affine(w[ParamId::W3], f.t2, vec(w[ParamId::b3]), f.mu);
  math::affine(w[ParamId::W4], f.t2, vec(w[ParamId::b4]), f.ls_raw);
  f.ls = clamp_log_sigma(f.ls_raw);
  if (params.variant == Variant::VdshSP) {
    f.mu_v.resize(K);
    f.lsv_raw.resize(K);
    math::affine(w[ParamId::W3p], f.t2, vec(w[ParamId::b3p]), f.mu_v);
    math::affine(w[ParamId::W4p], f.t2, vec(w[ParamId::b4p]), f.lsv_raw);
    f.lsv = clamp_log_sigma(f.lsv_raw);
  }
  if (!math::all_finite(f.mu) || !math::all_finite(f.ls_raw) ||
      (params.variant == Variant::VdshSP &&
       (!math::all_finite(f.mu_v) || !math::all_finite(f.lsv_raw)))) {
    throw DivergenceError("non-finite encoder activations");
  }
  return f;
}

Vector word_logits(const ModelParams& params, std::span<const double> z) {
  const auto& g = params.weights[ParamId::G];
  const auto bw = vec(params.weights[ParamId::bw]);
  Vector logits(bw.begin(), bw.end());
  for (std::size_t k = 0; k < g.rows(); ++k) {
    const double zk = z[k];
    if (zk == 0.0) continue;
    const auto gk = g.row(k);
    for (std::size_t t = 0; t < logits.size(); ++t) logits[t] -= zk * gk[t];
  }
  return logits;
}

double kl_terms(std::span<const double> mu, std::span<const double> ls) {
  double total = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double var = std::exp(2.0 * ls[k]);
    total += 1.0 + 2.0 * ls[k] - mu[k] * mu[k] - var;
  }
  return -0.5 * total;
}

Vector sample(std::span<const double> mu, std::span<const double> ls,
              std::span<const double> eps) {
  if (eps.size() != mu.size()) throw DataError("noise dimension does not match K");
  Vector s(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) s[k] = mu[k] + eps[k] * std::exp(ls[k]);
  return s;
}

const std::vector<std::uint32_t>& require_labels(const ModelParams& params,
                                                 const Observation& obs) {
  if (!obs.labels) {
    throw DataError(std::string(to_string(params.variant)) + " needs document labels");
  }
  return *obs.labels;
}

}  // namespace

Encoding encode(const ModelParams& params, const math::SparseVector& input,
                const DropoutMasks* masks) {
  auto f = run_encoder(params, input, masks);
  Encoding enc;
  enc.shared = {std::move(f.mu), std::move(f.ls)};
  if (params.variant == Variant::VdshSP) {
    enc.private_part = GaussianPosterior{std::move(f.mu_v), std::move(f.lsv)};
  }
  return enc;
}

LatentSample reparameterize(const GaussianPosterior& posterior, std::span<const double> epsilon) {
  return {sample(posterior.mu, posterior.log_sigma, epsilon),
          Vector(epsilon.begin(), epsilon.end())};
}

double word_log_likelihood(const ModelParams& params, std::span<const double> z,
                           const corpus::CountVector& counts) {
  if (z.size() != params.dims.K) throw DataError("latent dimension does not match K");
  const auto logp = math::log_softmax(word_logits(params, z));
  double total = 0.0;
  for (const auto& [t, c] : counts) {
    if (t >= params.dims.V) throw DataError("count term id exceeds vocabulary size");
    total += static_cast<double>(c) * logp[t];
  }
  return total;
}

double label_log_likelihood(const ModelParams& params, std::span<const double> s,
                            std::span<const std::uint32_t> labels, LabelMode mode) {
  if (!is_supervised(params.variant)) {
    throw ConfigError("label likelihood is undefined for the unsupervised vdsh variant");
  }
  const auto L = params.dims.L;
  std::vector<char> present(L, 0);
  for (auto l : labels) {
    if (l >= L) throw DataError("label id " + std::to_string(l) + " out of range");
    present[l] = 1;
  }
  Vector f(L);
  math::affine(params.weights[ParamId::U], s, vec(params.weights[ParamId::c]), f);
  double total = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    if (present[j]) {
      total += math::log_logistic(f[j]);
    } else if (mode == LabelMode::Full) {
      total += math::log_logistic(-f[j]);  // log(1 - sigma(f))
    }
  }
  return total;
}

double kl_to_standard_normal(const GaussianPosterior& posterior) {
  const auto ls = clamp_log_sigma(posterior.log_sigma);
  return std::max(0.0, kl_terms(posterior.mu, ls));
}

std::vector<NoiseDraw> draw_noise(const ModelParams& params, std::size_t samples,
                                  math::Rng& rng) {
  std::vector<NoiseDraw> draws(samples);
  for (auto& d : draws) {
    d.eps_s = math::standard_normal(params.dims.K, rng);
    if (params.variant == Variant::VdshSP) d.eps_v = math::standard_normal(params.dims.K, rng);
  }
  return draws;
}

double elbo(const ModelParams& params, const Observation& obs, std::span<const NoiseDraw> draws,
            const DropoutMasks* masks, const ElboOptions& options) {
  if (draws.empty()) throw ConfigError("elbo needs at least one noise draw");
  const bool supervised = is_supervised(params.variant);
  const bool sp = params.variant == Variant::VdshSP;
  const auto* labels = supervised ? &require_labels(params, obs) : nullptr;
  const auto f = run_encoder(params, *obs.input, masks);
  double expected = 0.0;
  for (const auto& draw : draws) {
    auto z = sample(f.mu, f.ls, draw.eps_s);
    double term = 0.0;
    if (supervised) term += label_log_likelihood(params, z, *labels, options.label_mode);
    if (sp) {
      const auto v = sample(f.mu_v, f.lsv, draw.eps_v);
      for (std::size_t k = 0; k < z.size(); ++k) z[k] += v[k];
    }
    term += word_log_likelihood(params, z, *obs.counts);
    expected += term;
  }
  expected /= static_cast<double>(draws.size());
  double kl = kl_terms(f.mu, f.ls);
  if (sp) kl += kl_terms(f.mu_v, f.lsv);
  return expected - kl;
}

double accumulate_elbo_gradient(const ModelParams& params, const Observation& obs,
                                std::span<const NoiseDraw> draws, const DropoutMasks* masks,
                                double scale, ParamSet& grad, const ElboOptions& options) {
  if (draws.empty()) throw ConfigError("elbo needs at least one noise draw");
  const auto& w = params.weights;
  const std::size_t K = params.dims.K;
  const std::size_t V = params.dims.V;
  const std::size_t D = params.dims.D;
  const std::size_t L = params.dims.L;
  const bool supervised = is_supervised(params.variant);
  const bool sp = params.variant == Variant::VdshSP;
  const auto* labels = supervised ? &require_labels(params, obs) : nullptr;

  const auto f = run_encoder(params, *obs.input, masks);
  const Vector sigma = [&] {
    Vector out(K);
    for (std::size_t k = 0; k < K; ++k) out[k] = std::exp(f.ls[k]);
    return out;
  }();
  Vector sigma_v;
  if (sp) {
    sigma_v.resize(K);
    for (std::size_t k = 0; k < K; ++k) sigma_v[k] = std::exp(f.lsv[k]);
  }

  std::vector<char> present(L, 0);
  if (labels) {
    for (auto l : *labels) {
      if (l >= L) throw DataError("label id " + std::to_string(l) + " out of range");
      present[l] = 1;
    }
  }
  std::uint64_t n_tokens = 0;
  for (const auto& [t, c] : *obs.counts) {
    if (t >= V) throw DataError("count term id exceeds vocabulary size");
    n_tokens += c;
  }

  // Gradients of the ELBO w.r.t. the posterior parameters.
  Vector d_mu(K, 0.0), d_ls(K, 0.0), d_mu_v(sp ? K : 0, 0.0), d_lsv(sp ? K : 0, 0.0);
  const double inv_m = 1.0 / static_cast<double>(draws.size());
  const double sample_scale = scale * inv_m;
  double expected = 0.0;
  Vector d_logits(V);
  Vector f_label(L);

  for (const auto& draw : draws) {
    const auto s = sample(f.mu, f.ls, draw.eps_s);
    Vector z = s;
    Vector v;
    if (sp) {
      v = sample(f.mu_v, f.lsv, draw.eps_v);
      for (std::size_t k = 0; k < K; ++k) z[k] += v[k];
    }
    Vector d_s(K, 0.0);

    if (supervised) {
      math::affine(w[ParamId::U], s, vec(w[ParamId::c]), f_label);
      Vector d_f(L);
      for (std::size_t j = 0; j < L; ++j) {
        const double p = math::logistic(f_label[j]);
        if (present[j]) {
          expected += math::log_logistic(f_label[j]);
          d_f[j] = 1.0 - p;
        } else if (options.label_mode == LabelMode::Full) {
          expected += math::log_logistic(-f_label[j]);
          d_f[j] = -p;
        } else {
          d_f[j] = 0.0;
        }
      }
      math::add_outer(d_f, s, sample_scale, grad[ParamId::U]);
      auto dc = vec(grad[ParamId::c]);
      for (std::size_t j = 0; j < L; ++j) dc[j] += sample_scale * d_f[j];
      math::add_transposed_product(w[ParamId::U], d_f, d_s);
    }

    // Word reconstruction: d/dlogit_t = count_t - N p_t.
    const auto logp = math::log_softmax(word_logits(params, z));
    const double n = static_cast<double>(n_tokens);
    for (std::size_t t = 0; t < V; ++t) d_logits[t] = -n * std::exp(logp[t]);
    for (const auto& [t, c] : *obs.counts) {
      expected += static_cast<double>(c) * logp[t];
      d_logits[t] += static_cast<double>(c);
    }
    auto dbw = vec(grad[ParamId::bw]);
    for (std::size_t t = 0; t < V; ++t) dbw[t] += sample_scale * d_logits[t];
    // logits = -G^T z + b_w
    auto& dG = grad[ParamId::G];
    const auto& G = w[ParamId::G];
    Vector d_z(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const auto gk = G.row(k);
      auto dgk = dG.row(k);
      const double coeff = -z[k] * sample_scale;
      double acc = 0.0;
      for (std::size_t t = 0; t < V; ++t) {
        dgk[t] += coeff * d_logits[t];
        acc += gk[t] * d_logits[t];
      }
      d_z[k] = -acc;
    }
    for (std::size_t k = 0; k < K; ++k) d_s[k] += d_z[k];

    // Pathwise terms through s = mu + eps * sigma.
    for (std::size_t k = 0; k < K; ++k) {
      d_mu[k] += inv_m * d_s[k];
      d_ls[k] += inv_m * d_s[k] * draw.eps_s[k] * sigma[k];
    }
    if (sp) {
      for (std::size_t k = 0; k < K; ++k) {
        d_mu_v[k] += inv_m * d_z[k];
        d_lsv[k] += inv_m * d_z[k] * draw.eps_v[k] * sigma_v[k];
      }
    }
  }
  expected *= inv_m;

  // -KL: d/dmu = -mu, d/dlog sigma = 1 - sigma^2.
  double kl = kl_terms(f.mu, f.ls);
  for (std::size_t k = 0; k < K; ++k) {
    d_mu[k] -= f.mu[k];
    d_ls[k] += 1.0 - sigma[k] * sigma[k];
  }
  if (sp) {
    kl += kl_terms(f.mu_v, f.lsv);
    for (std::size_t k = 0; k < K; ++k) {
      d_mu_v[k] -= f.mu_v[k];
      d_lsv[k] += 1.0 - sigma_v[k] * sigma_v[k];
    }
  }

  // The clamp blocks gradient outside [-10, 10].
  auto through_clamp = [](Vector& d, const Vector& raw) {
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (raw[k] < kLogSigmaMin || raw[k] > kLogSigmaMax) d[k] = 0.0;
    }
  };
  through_clamp(d_ls, f.ls_raw);
  if (sp) through_clamp(d_lsv, f.lsv_raw);

  auto head_backward = [&](ParamId wid, ParamId bid, const Vector& d_out, Vector& d_t2) {
    math::add_outer(d_out, f.t2, scale, grad[wid]);
    auto db = vec(grad[bid]);
    for (std::size_t k = 0; k < K; ++k) db[k] += scale * d_out[k];
    math::add_transposed_product(w[wid], d_out, d_t2);
  };
  Vector d_t2(D, 0.0);
  head_backward(ParamId::W3, ParamId::b3, d_mu, d_t2);
  head_backward(ParamId::W4, ParamId::b4, d_ls, d_t2);
  if (sp) {
    head_backward(ParamId::W3p, ParamId::b3p, d_mu_v, d_t2);
    head_backward(ParamId::W4p, ParamId::b4p, d_lsv, d_t2);
  }

  if (masks) {
    for (std::size_t i = 0; i < D; ++i) d_t2[i] *= masks->hidden2[i];
  }
  const auto d_a2 = math::relu_backward(f.a2, d_t2);
  math::add_outer(d_a2, f.t1, scale, grad[ParamId::W2]);
  {
    auto db2 = vec(grad[ParamId::b2]);
    for (std::size_t i = 0; i < D; ++i) db2[i] += scale * d_a2[i];
  }
  Vector d_t1(D, 0.0);
  math::add_transposed_product(w[ParamId::W2], d_a2, d_t1);
  if (masks) {
    for (std::size_t i = 0; i < D; ++i) d_t1[i] *= masks->hidden1[i];
  }
  const auto d_a1 = math::relu_backward(f.a1, d_t1);
  math::add_outer_sparse(d_a1, *obs.input, scale, grad[ParamId::W1]);
  {
    auto db1 = vec(grad[ParamId::b1]);
    for (std::size_t i = 0; i < D; ++i) db1[i] += scale * d_a1[i];
  }

  return expected - kl;
}

GradientResult elbo_gradients(const ModelParams& params, std::span<const Observation> batch,
                              std::span<const Perturbation> perturbations,
                              const ElboOptions& options) {
  if (batch.empty()) throw ConfigError("empty minibatch");
  if (perturbations.size() != batch.size()) {
    throw ConfigError("need one perturbation per minibatch item");
  }
  GradientResult result;
  result.grad = params.weights.zeros_like();
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> values(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = perturbations[i];
    values[i] = accumulate_elbo_gradient(params, batch[i], p.draws,
                                         p.masks ? &*p.masks : nullptr, scale, result.grad,
                                         options);
  }
  result.mean_elbo = math::compensated_sum(values) * scale;
  require_finite(result.grad, "gradient");
  return result;
}

std::vector<math::Vector> encode_means(const ModelParams& params, const corpus::Corpus& corpus,
                                       std::span<const std::size_t> indices, unsigned threads) {
  std::vector<math::Vector> out(indices.size());
  parallel_chunks(indices.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = encode(params, corpus.docs.at(indices[i]).weighted).shared.mu;
    }
  });
  return out;
}

}  // namespace vdsh::model
