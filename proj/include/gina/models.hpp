#pragma once

// GINA, PVAE and Not-MIWAE: networks, the importance-weighted bound on
// log p(X_o, R), training, imputation and generation.
//
// All three share an encoder q(Z | X_o), a decoder f: R^H -> R^D and a
// Gaussian or Bernoulli likelihood. They differ in the prior and the
// missing-mechanism term of the log importance weight
//
//   ln w_k = beta * ln p(r | x_o, x_u^k, z^k) + ln p(x_o | z^k) + ln p(z^k | u) - ln q(z^k | x_o)
//
//   PVAE      no missingness term, p(z) = N(0, I)
//   Not-MIWAE p(r | x), p(z) = N(0, I)
//   GINA      p(r | x, z), p(z | u) conditionally factorial Gaussian

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gina/adam.hpp"
#include "gina/autodiff.hpp"
#include "gina/dataio.hpp"
#include "gina/distributions.hpp"
#include "gina/model_spec.hpp"

namespace gina {

// ---------------------------------------------------------------------------
// Parameters

/// Named parameter tensors in a fixed order.
struct Params {
    std::vector<std::string> names;
    std::vector<Tensor> values;

    void add(std::string name, Tensor value) {
        names.push_back(std::move(name));
        values.push_back(std::move(value));
    }

    [[nodiscard]] std::size_t index(std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw ConfigError("unknown parameter '" + std::string(name) + "'");
    }

    [[nodiscard]] bool contains(std::string_view name) const {
        return std::find(names.begin(), names.end(), name) != names.end();
    }

    Tensor& operator[](std::string_view name) { return values[index(name)]; }
    const Tensor& operator[](std::string_view name) const { return values[index(name)]; }

    [[nodiscard]] std::size_t size() const { return values.size(); }

    [[nodiscard]] Eigen::Index scalar_count() const {
        Eigen::Index n = 0;
        for (const auto& v : values) n += v.size();
        return n;
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(values.begin(), values.end(), [](const Tensor& t) { return t.allFinite(); });
    }

    friend bool operator==(const Params& a, const Params& b) {
        if (a.names != b.names || a.values.size() != b.values.size()) return false;
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            if (a.values[i].rows() != b.values[i].rows() || a.values[i].cols() != b.values[i].cols()) return false;
            if (a.values[i] != b.values[i]) return false;
        }
        return true;
    }
};

/// Uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-s, s);
    Tensor w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = unif(rng);
    return w;
}

namespace detail {

inline void add_mlp(Params& p, const std::string& prefix, int in, const std::vector<int>& hidden, int out, Rng& rng) {
    int prev = in;
    std::size_t layer = 0;
    auto add_layer = [&](int width) {
        p.add(prefix + ".W" + std::to_string(layer), glorot_uniform(prev, width, rng));
        p.add(prefix + ".b" + std::to_string(layer), Tensor::Zero(1, width));
        prev = width;
        ++layer;
    };
    for (int w : hidden) add_layer(w);
    add_layer(out);
}

inline int missing_net_input(const ModelSpec& s) {
    return s.data_dim + (s.missing_input == MissingInput::XZ ? s.latent_dim : 0);
}

inline std::vector<int> missing_hidden_layers(const ModelSpec& s) {
    return s.missing_net == MissingNet::MLP ? std::vector<int>{s.missing_hidden} : std::vector<int>{};
}

}  // namespace detail

inline Params init_params(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    const int d = spec.data_dim;
    const int h = spec.latent_dim;
    Params p;
    detail::add_mlp(p, "dec", h, spec.decoder_hidden, d, rng);
    if (spec.encoder == EncoderKind::ZeroImpute) {
        detail::add_mlp(p, "enc", 2 * d, spec.encoder_hidden, 2 * h, rng);
    } else {
        p.add("enc.id", glorot_uniform(d, spec.id_dim, rng));
        p.add("enc.hwx", glorot_uniform(1, spec.feature_dim, rng));
        p.add("enc.hwe", glorot_uniform(spec.id_dim, spec.feature_dim, rng));
        p.add("enc.hb", Tensor::Zero(1, spec.feature_dim));
        detail::add_mlp(p, "enc", spec.feature_dim, spec.encoder_hidden, 2 * h, rng);
    }
    if (spec.has_missing_net())
        detail::add_mlp(p, "miss", detail::missing_net_input(spec), detail::missing_hidden_layers(spec), d, rng);
    if (spec.conditional_prior()) {
        p.add("prior.Wm", glorot_uniform(spec.aux_dim, h, rng));
        p.add("prior.bm", Tensor::Zero(1, h));
        p.add("prior.Wv", glorot_uniform(spec.aux_dim, h, rng));
        p.add("prior.bv", Tensor::Zero(1, h));
    }
    return p;
}

/// Parameters placed on a tape, either as tracked variables (training) or as
/// constants (inference).
class Binding {
public:
    Binding(Tape& tape, const Params& params, bool track = true) : tape_(&tape), params_(&params) {
        vars_.reserve(params.size());
        for (const auto& v : params.values) vars_.push_back(track ? tape.variable(v) : tape.constant(v));
    }

    Var operator()(std::string_view name) const { return vars_[params_->index(name)]; }
    [[nodiscard]] Tape& tape() const { return *tape_; }
    [[nodiscard]] const Params& params() const { return *params_; }

    /// Gradients after tape.backward(); zeros for parameters the loss
    /// does not depend on.
    [[nodiscard]] std::vector<Tensor> grads() const {
        std::vector<Tensor> out;
        out.reserve(vars_.size());
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            const Tensor& g = tape_->grad(vars_[i]);
            const Tensor& v = params_->values[i];
            out.push_back(g.size() == 0 ? Tensor::Zero(v.rows(), v.cols()) : g);
        }
        return out;
    }

private:
    Tape* tape_;
    const Params* params_;
    std::vector<Var> vars_;
};

// ---------------------------------------------------------------------------
// Networks (batched: one row per sample)

inline Var activate(Var v, Activation a) { return a == Activation::Tanh ? tanh(v) : relu(v); }

/// Dense layers prefix.W0/b0 ... with activations between layers and a
/// linear output.
inline Var mlp(const Binding& b, const std::string& prefix, Var input, std::size_t layers, Activation act) {
    Var h = input;
    for (std::size_t i = 0; i < layers; ++i) {
        const std::string k = std::to_string(i);
        h = add_bias(matmul(h, b(prefix + ".W" + k)), b(prefix + ".b" + k));
        if (i + 1 < layers) h = activate(h, act);
    }
    return h;
}

struct GaussianVars {
    Var mean;
    Var log_var;
};

inline Tensor zero_unobserved(const Tensor& x, const Tensor& r) { return (r.array() != 0.0).select(x, 0.0); }

/// q(Z | X_o) for a batch. x must already be zero at unobserved entries.
inline GaussianVars encode_rows(const Binding& b, const ModelSpec& s, const Tensor& x, const Tensor& r) {
    Tape& t = b.tape();
    const Eigen::Index n = x.rows();
    const Eigen::Index d = s.data_dim;
    if (x.cols() != d || r.cols() != d || r.rows() != n)
        throw ShapeError("encode: expected " + std::to_string(d) + " columns, got x " + shape_str(x) + " r " +
                         shape_str(r));
    Var out;
    if (s.encoder == EncoderKind::ZeroImpute) {
        Tensor in(n, 2 * d);
        in.leftCols(d) = x;
        in.rightCols(d) = r;
        out = mlp(b, "enc", t.constant(std::move(in)), s.encoder_hidden.size() + 1, s.activation);
    } else {
        // h(x_d, e_d) = act(x_d * w_x + e_d W_e + b_h), summed over observed d
        // in ascending index order.
        Var xcol = t.constant(Eigen::Map<const Tensor>(x.data(), n * d, 1));
        Var rcol = t.constant(Eigen::Map<const Tensor>(r.data(), n * d, 1));
        Var id_part = add_bias(matmul(b("enc.id"), b("enc.hwe")), b("enc.hb"));
        Var pre = matmul(xcol, b("enc.hwx")) + tile_rows(id_part, n);
        Var agg = group_sum_rows(mul_col(activate(pre, s.activation), rcol), d);
        out = mlp(b, "enc", agg, s.encoder_hidden.size() + 1, s.activation);
    }
    const Eigen::Index h = s.latent_dim;
    return {slice_cols(out, 0, h), clamp(slice_cols(out, h, h), kLogVarMin, kLogVarMax)};
}

/// Decoder pre-activation f(z): Gaussian mean, or Bernoulli logits.
inline Var decode_rows(const Binding& b, const ModelSpec& s, Var z) {
    if (z.cols() != s.latent_dim)
        throw ShapeError("decode: latent has " + std::to_string(z.cols()) + " columns, expected " +
                         std::to_string(s.latent_dim));
    return mlp(b, "dec", z, s.decoder_hidden.size() + 1, s.activation);
}

/// Observation probabilities pi_d of the missing-mechanism net.
inline Var missing_probs_rows(const Binding& b, const ModelSpec& s, Var x, Var z) {
    if (!s.has_missing_net()) throw ConfigError("missing_probs: this model kind has no missing-mechanism network");
    Var in = s.missing_input == MissingInput::XZ ? concat_cols(x, z) : x;
    const std::size_t layers = s.missing_net == MissingNet::MLP ? 2 : 1;
    return sigmoid(mlp(b, "miss", in, layers, s.activation));
}

inline GaussianVars prior_rows(const Binding& b, const ModelSpec& s, const Tensor& u) {
    Tape& t = b.tape();
    if (!s.conditional_prior()) {
        Var zero = t.constant(Tensor::Zero(u.rows(), s.latent_dim));
        return {zero, zero};
    }
    if (u.cols() != s.aux_dim)
        throw ShapeError("prior: auxiliary input has " + std::to_string(u.cols()) + " columns, expected " +
                         std::to_string(s.aux_dim));
    Var uc = t.constant(u);
    return {add_bias(matmul(uc, b("prior.Wm")), b("prior.bm")),
            clamp(add_bias(matmul(uc, b("prior.Wv")), b("prior.bv")), kLogVarMin, kLogVarMax)};
}

// Single-row conveniences.

inline DiagGaussian encode(const Vec& x, const Vec& r, const ModelSpec& spec, const Params& params) {
    if (x.size() != spec.data_dim || r.size() != spec.data_dim)
        throw ShapeError("encode: expected vectors of length " + std::to_string(spec.data_dim));
    Tape t;
    Binding b(t, params, false);
    Tensor xr = zero_unobserved(x.transpose(), r.transpose());
    auto g = encode_rows(b, spec, xr, r.transpose());
    return {g.mean.value().row(0).transpose(), g.log_var.value().row(0).transpose()};
}

/// Likelihood parameters: Gaussian mean, or Bernoulli probabilities.
inline Vec decode(const Vec& z, const ModelSpec& spec, const Params& params) {
    if (z.size() != spec.latent_dim)
        throw ShapeError("decode: latent has " + std::to_string(z.size()) + " entries, expected " +
                         std::to_string(spec.latent_dim));
    Tape t;
    Binding b(t, params, false);
    Var f = decode_rows(b, spec, t.constant(Tensor(z.transpose())));
    if (spec.likelihood == Likelihood::Bernoulli) f = sigmoid(f);
    return f.value().row(0).transpose();
}

inline BernoulliVec missing_probs(const Vec& x, const Vec& z, const ModelSpec& spec, const Params& params) {
    if (!spec.has_missing_net()) throw ConfigError("missing_probs: PVAE has no missing-mechanism network");
    if (x.size() != spec.data_dim || z.size() != spec.latent_dim) throw ShapeError("missing_probs: dimension mismatch");
    Tape t;
    Binding b(t, params, false);
    Var p = missing_probs_rows(b, spec, t.constant(Tensor(x.transpose())), t.constant(Tensor(z.transpose())));
    return BernoulliVec(p.value().row(0).transpose());
}

inline DiagGaussian prior(const Vec& u, const ModelSpec& spec, const Params& params) {
    if (!spec.conditional_prior()) return DiagGaussian::standard(spec.latent_dim);
    CondPriorParams cp{params["prior.Wm"], params["prior.bm"], params["prior.Wv"], params["prior.bv"]};
    return cond_prior(u, cp);
}

// ---------------------------------------------------------------------------
// Importance-weighted bound

/// Standard-normal noise for one evaluation of the bound over n rows.
/// Rows of the sample dimension are ordered row-major: row i, sample k at
/// index i*K + k.
struct BoundNoise {
    Tensor latent;  // (n*K) x H
    Tensor data;    // (n*K) x D, used for reparameterised x_u draws

    static BoundNoise draw(Eigen::Index n, const ModelSpec& s, Rng& rng) {
        const Eigen::Index nk = n * s.importance_samples;
        BoundNoise out;
        out.latent = standard_normal(nk, s.latent_dim, rng);
        out.data = standard_normal(nk, s.data_dim, rng);
        return out;
    }
};

struct BoundTerms {
    Var per_row;         // n x 1 bound values
    Var log_weights;     // n x K
    Var log_p_missing;   // (n*K) x 1, unweighted; empty Var for PVAE
    Var log_p_observed;  // (n*K) x 1
    Var log_prior;       // (n*K) x 1
    Var log_q;           // (n*K) x 1
};

namespace detail {

inline void require_finite(Var v, const char* term) {
    if (!v.value().allFinite()) throw NumericError(std::string("non-finite value in bound term ") + term);
}

}  // namespace detail

/// L_K for every row of a batch. x values at unobserved positions are never
/// read. u may have zero columns when the model has no conditional prior.
inline BoundTerms iw_bound_rows(const Binding& b, const ModelSpec& s, const Tensor& x, const Tensor& r, const Tensor& u,
                                const BoundNoise& noise) {
    Tape& t = b.tape();
    const Eigen::Index n = x.rows();
    const Eigen::Index k = s.importance_samples;
    const Eigen::Index d = s.data_dim;
    if (x.cols() != d || r.rows() != n || r.cols() != d)
        throw ShapeError("iw_bound: data " + shape_str(x) + " / mask " + shape_str(r) + " do not match D=" +
                         std::to_string(d));
    if (s.conditional_prior() && u.rows() != n)
        throw ShapeError("iw_bound: auxiliary rows " + std::to_string(u.rows()) + " != " + std::to_string(n));
    if (noise.latent.rows() != n * k || noise.latent.cols() != s.latent_dim ||
        (s.likelihood == Likelihood::Gaussian && (noise.data.rows() != n * k || noise.data.cols() != d)))
        throw ShapeError("iw_bound: noise does not match batch size and K");

    const Tensor xo = zero_unobserved(x, r);
    auto q = encode_rows(b, s, xo, r);
    Var mean_k = repeat_rows(q.mean, k);
    Var logvar_k = repeat_rows(q.log_var, k);
    Var z = rsample(mean_k, logvar_k, t.constant(noise.latent));

    BoundTerms out;
    out.log_q = gaussian_logpdf_rows(z, mean_k, logvar_k);

    auto p = prior_rows(b, s, s.conditional_prior() ? u : Tensor(n, 0));
    out.log_prior = gaussian_logpdf_rows(z, repeat_rows(p.mean, k), repeat_rows(p.log_var, k));

    Tensor xk(n * k, d);
    Tensor rk(n * k, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            xk.row(i * k + j) = xo.row(i);
            rk.row(i * k + j) = r.row(i);
        }
    }
    Var xk_v = t.constant(xk);
    Var rk_v = t.constant(rk);
    Var miss_v = t.constant((1.0 - rk.array()).matrix());

    Var f = decode_rows(b, s, z);
    Var x_fill;
    if (s.likelihood == Likelihood::Gaussian) {
        out.log_p_observed = row_sum(rk_v * gaussian_logpdf_entries_fixed(xk_v, f, s.log_sigma));
        if (s.has_missing_net()) {
            Var xu = f + t.constant(noise.data * std::exp(s.log_sigma));
            x_fill = xk_v + miss_v * xu;
        }
    } else {
        Var probs = sigmoid(f);
        out.log_p_observed = row_sum(rk_v * bernoulli_logpmf_entries(xk_v, probs));
        if (s.has_missing_net()) x_fill = xk_v + miss_v * probs;
    }

    Var log_w = out.log_p_observed + out.log_prior - out.log_q;
    if (s.has_missing_net()) {
        Var pi = missing_probs_rows(b, s, x_fill, z);
        out.log_p_missing = row_sum(bernoulli_logpmf_entries(rk_v, pi));
        detail::require_finite(out.log_p_missing, "log p(r | x, z)");
        log_w = log_w + scale(out.log_p_missing, s.beta);
    }
    detail::require_finite(out.log_p_observed, "log p(x_o | z)");
    detail::require_finite(out.log_prior, "log p(z | u)");
    detail::require_finite(out.log_q, "log q(z | x_o)");

    out.log_weights = reshape(log_w, n, k);
    out.per_row = shift(logsumexp_rows(out.log_weights), -std::log(static_cast<double>(k)));
    detail::require_finite(out.per_row, "logsumexp of importance weights");
    return out;
}

/// Single-row bound value with fresh noise.
inline double iw_bound(const Vec& x, const Vec& r, const Vec& u, const ModelSpec& spec, const Params& params,
                       Rng& rng) {
    Tape t;
    Binding b(t, params, false);
    auto noise = BoundNoise::draw(1, spec, rng);
    return iw_bound_rows(b, spec, x.transpose(), r.transpose(), u.transpose(), noise).per_row.scalar();
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 100;
    int epochs = 100;
    std::uint64_t seed = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, lr, batch_size, epochs, seed)

struct TrainedModel;

inline Tensor gather_rows(const Tensor& m, std::span<const Eigen::Index> idx) {
    Tensor out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

/// A model with its parameters; immutable once training returns.
struct TrainedModel {
    ModelSpec spec;
    Params params;
    std::vector<double> trace;  // epoch-mean bound
    TrainConfig hyper;

    [[nodiscard]] Eigen::Index data_dim() const { return spec.data_dim; }

    [[nodiscard]] DiagGaussian posterior(const Vec& x, const Vec& r) const { return encode(x, r, spec, params); }

    /// x with unobserved entries replaced by one draw from
    /// the approximate conditional: z ~ q(Z | x_o), x_u ~ p(X_u | z).
    Vec sample_completion(const Vec& x, const Vec& r, Rng& rng) const;
};

/// Fresh model with initial parameters drawn from `seed`.
inline TrainedModel initialize(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    TrainedModel m;
    m.spec = spec;
    m.params = init_params(spec, rng);
    m.hyper.seed = seed;
    return m;
}

/// Auxiliary block U the model consumes for `data` (empty for models
/// without a conditional prior).
inline Tensor model_aux(const ModelSpec& spec, const MaskedMatrix& data) {
    if (!spec.conditional_prior()) return Tensor(data.rows(), 0);
    Tensor u = assemble_aux(data, spec.aux_source);
    if (u.cols() != spec.aux_dim)
        throw ShapeError("auxiliary block has " + std::to_string(u.cols()) + " columns, model expects " +
                         std::to_string(spec.aux_dim));
    return u;
}

using EpochCallback = std::function<void(int epoch, double mean_bound)>;

/// Maximise the mean bound by minibatch Adam. Batches are reshuffled every
/// epoch from the run RNG; the last short batch is kept.
inline TrainedModel train(const MaskedMatrix& data, const ModelSpec& spec, const TrainConfig& hyper,
                          const EpochCallback& on_epoch = {}) {
    spec.validate();
    data.validate();
    if (data.cols() != spec.data_dim)
        throw ShapeError("train: data has " + std::to_string(data.cols()) + " columns, model expects " +
                         std::to_string(spec.data_dim));
    if (data.rows() < 1) throw DataError("train: dataset is empty");
    if (hyper.batch_size < 1 || hyper.epochs < 0 || !(hyper.lr >= 0.0))
        throw ConfigError("train: need batch_size >= 1, epochs >= 0, lr >= 0");

    Rng rng(hyper.seed);
    TrainedModel model;
    model.spec = spec;
    model.hyper = hyper;
    model.params = init_params(spec, rng);

    const Tensor u_all = model_aux(spec, data);
    const Tensor x_all = data.zero_filled();
    AdamState adam(AdamConfig{hyper.lr});
    std::vector<Eigen::Index> order(data.rows());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto n = static_cast<std::size_t>(data.rows());
    const auto bs = static_cast<std::size_t>(hyper.batch_size);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += bs, ++batch_index) {
            std::span<const Eigen::Index> idx(order.data() + start, std::min(bs, n - start));
            const Tensor x = gather_rows(x_all, idx);
            const Tensor r = gather_rows(data.mask, idx);
            const Tensor u = gather_rows(u_all, idx);
            auto noise = BoundNoise::draw(x.rows(), spec, rng);
            Tape tape;
            Binding b(tape, model.params);
            try {
                auto terms = iw_bound_rows(b, spec, x, r, u, noise);
                Var loss = -mean(terms.per_row);
                tape.backward(loss);
                total += terms.per_row.value().sum();
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + ")");
            }
            auto grads = b.grads();
            adam_step(model.params.values, grads, adam);
        }
        const double epoch_mean = total / static_cast<double>(n);
        if (!std::isfinite(epoch_mean))
            throw NumericError("non-finite epoch-mean bound at epoch " + std::to_string(epoch));
        model.trace.push_back(epoch_mean);
        if (on_epoch) on_epoch(epoch, epoch_mean);
    }
    if (!model.params.all_finite()) throw NumericError("training produced non-finite parameters");
    return model;
}

/// Mean bound over a dataset with fresh noise; used by tests and evaluation.
inline double mean_bound(const TrainedModel& model, const MaskedMatrix& data, Rng& rng) {
    Tape t;
    Binding b(t, model.params, false);
    auto noise = BoundNoise::draw(data.rows(), model.spec, rng);
    auto terms = iw_bound_rows(b, model.spec, data.zero_filled(), data.mask, model_aux(model.spec, data), noise);
    return terms.per_row.value().mean();
}

// ---------------------------------------------------------------------------
// Imputation and generation

struct Imputation {
    Tensor samples;  // n_samples x D, observed entries copied through
    Vec point;       // mean over samples of the decoder mean (or probabilities)
};

namespace detail {

/// Draw n latent samples per row; returns decoder outputs (means or
/// probabilities), one block of n_samples rows per input row.
inline Tensor posterior_decoder_outputs(const TrainedModel& m, const Tensor& x, const Tensor& r, int n_samples,
                                        Rng& rng) {
    Tape t;
    Binding b(t, m.params, false);
    auto q = encode_rows(b, m.spec, zero_unobserved(x, r), r);
    Var mean_k = repeat_rows(q.mean, n_samples);
    Var lv_k = repeat_rows(q.log_var, n_samples);
    Var z = rsample(mean_k, lv_k, t.constant(standard_normal(mean_k.rows(), mean_k.cols(), rng)));
    Var f = decode_rows(b, m.spec, z);
    if (m.spec.likelihood == Likelihood::Bernoulli) f = sigmoid(f);
    return f.value();
}

inline Tensor sample_likelihood(const ModelSpec& s, const Tensor& params, Rng& rng) {
    if (s.likelihood == Likelihood::Gaussian)
        return params + std::exp(s.log_sigma) * standard_normal(params.rows(), params.cols(), rng);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Tensor out(params.rows(), params.cols());
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = unif(rng) < params.data()[i] ? 1.0 : 0.0;
    return out;
}

}  // namespace detail

inline Imputation impute(const TrainedModel& model, const Vec& x, const Vec& r, int n_samples, Rng& rng) {
    if (n_samples < 1) throw ConfigError("impute: n_samples must be >= 1");
    if (x.size() != model.spec.data_dim || r.size() != model.spec.data_dim)
        throw ShapeError("impute: expected vectors of length " + std::to_string(model.spec.data_dim));
    const Tensor outs = detail::posterior_decoder_outputs(model, x.transpose(), r.transpose(), n_samples, rng);
    const Tensor draws = detail::sample_likelihood(model.spec, outs, rng);
    Imputation res;
    res.samples = draws;
    res.point = outs.colwise().mean().transpose();
    for (Eigen::Index d = 0; d < x.size(); ++d) {
        if (r[d] == 0.0) continue;
        res.samples.col(d).setConstant(x[d]);
        res.point[d] = x[d];
    }
    return res;
}

/// Point imputation of every row: observed entries pass through.
inline Tensor impute_points(const TrainedModel& model, const MaskedMatrix& data, int n_samples, Rng& rng) {
    if (n_samples < 1) throw ConfigError("impute: n_samples must be >= 1");
    if (data.cols() != model.spec.data_dim) throw ShapeError("impute: data dimension does not match the model");
    const Tensor outs = detail::posterior_decoder_outputs(model, data.values, data.mask, n_samples, rng);
    Tensor point(data.rows(), data.cols());
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        point.row(i) = outs.middleRows(i * n_samples, n_samples).colwise().mean();
    return (data.mask.array() != 0.0).select(data.values, point);
}

/// One completed copy of the dataset: each missing entry replaced by a
/// single draw from the approximate conditional.
inline Tensor impute_single_draw(const TrainedModel& model, const MaskedMatrix& data, Rng& rng) {
    if (data.cols() != model.spec.data_dim) throw ShapeError("impute: data dimension does not match the model");
    const Tensor outs = detail::posterior_decoder_outputs(model, data.values, data.mask, 1, rng);
    const Tensor draws = detail::sample_likelihood(model.spec, outs, rng);
    return (data.mask.array() != 0.0).select(data.values, draws);
}

inline Vec TrainedModel::sample_completion(const Vec& x, const Vec& r, Rng& rng) const {
    const Tensor outs = detail::posterior_decoder_outputs(*this, x.transpose(), r.transpose(), 1, rng);
    const Tensor draw = detail::sample_likelihood(spec, outs, rng);
    Vec out = x;
    for (Eigen::Index d = 0; d < x.size(); ++d)
        if (r[d] == 0.0) out[d] = draw(0, d);
    return out;
}

/// n samples from the model's marginal over X. For a conditional prior,
/// sample i uses auxiliary row i mod U.rows().
inline Tensor generate(const TrainedModel& model, const Tensor& u, Eigen::Index n, Rng& rng) {
    const ModelSpec& s = model.spec;
    if (n < 0) throw ConfigError("generate: n must be >= 0");
    Tensor mean = Tensor::Zero(n, s.latent_dim);
    Tensor log_var = Tensor::Zero(n, s.latent_dim);
    if (s.conditional_prior() && n > 0) {
        if (u.rows() < 1 || u.cols() != s.aux_dim)
            throw ShapeError("generate: GINA needs auxiliary rows with " + std::to_string(s.aux_dim) + " columns");
        Tensor ur(n, s.aux_dim);
        for (Eigen::Index i = 0; i < n; ++i) ur.row(i) = u.row(i % u.rows());
        Tape t;
        Binding b(t, model.params, false);
        auto p = prior_rows(b, s, ur);
        mean = p.mean.value();
        log_var = p.log_var.value();
    }
    Tensor z = mean.array() + (0.5 * log_var.array()).exp() * standard_normal(n, s.latent_dim, rng).array();
    Tape t;
    Binding b(t, model.params, false);
    Var f = decode_rows(b, s, t.constant(z));
    if (s.likelihood == Likelihood::Bernoulli) f = sigmoid(f);
    return detail::sample_likelihood(s, f.value(), rng);
}

}  // namespace gina
