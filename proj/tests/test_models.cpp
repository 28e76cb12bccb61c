#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gina/model_io.hpp"
#include "gina/models.hpp"
#include "conjugate_toy.hpp"
#include "test_util.hpp"

using namespace gina;

namespace {

MaskedMatrix toy_data(std::uint64_t seed, Eigen::Index n = 6, Eigen::Index d = 3, bool with_aux = true) {
    Rng rng(seed);
    MaskedMatrix m;
    m.values = standard_normal(n, d, rng);
    m.mask = Tensor::Ones(n, d);
    std::bernoulli_distribution miss(0.35);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 1; j < d; ++j)
            if (miss(rng)) m.mask(i, j) = 0.0;
    m.aux = with_aux ? Tensor(m.values.leftCols(1)) : Tensor(n, 0);
    return m;
}

ModelSpec toy_spec(ModelKind k, int d = 3) { return ModelSpec::synthetic(k, d, 1); }

double mean_bound_fixed(const ModelSpec& s, const Params& p, const MaskedMatrix& data, const BoundNoise& noise) {
    Tape t;
    Binding b(t, p, false);
    return iw_bound_rows(b, s, data.zero_filled(), data.mask, model_aux(s, data), noise).per_row.value().mean();
}

}  // namespace

// ---------------------------------------------------------------------------
// encode

TEST(Encode, ZeroImputeIgnoresUnobservedValues) {
    const ModelSpec s = toy_spec(ModelKind::GINA);
    Rng rng(1);
    const Params p = init_params(s, rng);
    Vec x(3), r(3);
    x << 0.5, -1.0, 2.0;
    r << 1.0, 0.0, 1.0;
    const DiagGaussian a = encode(x, r, s, p);
    x[1] = 1e6;
    const DiagGaussian b = encode(x, r, s, p);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.log_var, b.log_var);
}

TEST(Encode, PointNetEmptyObservationUsesHeadAtZero) {
    ModelSpec s = ModelSpec::ratings(ModelKind::PVAE, 4, 0);
    Rng rng(2);
    const Params p = init_params(s, rng);
    Vec x = standard_normal(4, rng);
    const DiagGaussian g = encode(x, Vec::Zero(4), s, p);
    const Tensor head = Tensor::Zero(1, s.feature_dim) * p["enc.W0"] + p["enc.b0"];
    for (int h = 0; h < s.latent_dim; ++h) {
        EXPECT_EQ(g.mean[h], head(0, h));
        EXPECT_EQ(g.log_var[h], std::clamp(head(0, s.latent_dim + h), kLogVarMin, kLogVarMax));
    }
}

TEST(Encode, PointNetPermutationInvariant) {
    ModelSpec s = ModelSpec::ratings(ModelKind::PVAE, 5, 0);
    Rng rng(3);
    Params p = init_params(s, rng);
    Vec x = standard_normal(5, rng);
    Vec r(5);
    r << 1, 0, 1, 1, 0;
    const DiagGaussian base = encode(x, r, s, p);
    const DiagGaussian again = encode(x, r, s, p);
    EXPECT_EQ(base.mean, again.mean);

    const std::vector<int> perm{3, 0, 4, 2, 1};
    Vec xp(5), rp(5);
    Params pp = p;
    for (int i = 0; i < 5; ++i) {
        xp[i] = x[perm[i]];
        rp[i] = r[perm[i]];
        pp["enc.id"].row(i) = p["enc.id"].row(perm[i]);
    }
    const DiagGaussian permuted = encode(xp, rp, s, pp);
    EXPECT_LT((permuted.mean - base.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((permuted.log_var - base.log_var).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encode, PointNetIgnoresUnobservedValues) {
    ModelSpec s = ModelSpec::ratings(ModelKind::GINA, 4, 4);
    Rng rng(4);
    const Params p = init_params(s, rng);
    Vec x = standard_normal(4, rng);
    Vec r(4);
    r << 0, 1, 1, 0;
    const DiagGaussian a = encode(x, r, s, p);
    x[0] = -55.0;
    x[3] = 1e9;
    const DiagGaussian b = encode(x, r, s, p);
    EXPECT_EQ(a.mean, b.mean);
}

TEST(Encode, DimensionMismatch) {
    const ModelSpec s = toy_spec(ModelKind::PVAE);
    Rng rng(5);
    const Params p = init_params(s, rng);
    EXPECT_THROW(encode(Vec::Zero(2), Vec::Zero(3), s, p), ShapeError);
    EXPECT_THROW(decode(Vec::Zero(4), s, p), ShapeError);
}

// ---------------------------------------------------------------------------
// decode

TEST(Decode, ZeroWeightsGiveBias) {
    const ModelSpec s = toy_spec(ModelKind::PVAE);
    Rng rng(6);
    Params p = init_params(s, rng);
    p["dec.W0"].setZero();
    p["dec.W1"].setZero();
    p["dec.b1"] << 0.1, -0.2, 0.3;
    for (int trial = 0; trial < 5; ++trial) {
        const Vec out = decode(standard_normal(5, rng), s, p);
        EXPECT_EQ(out, p["dec.b1"].row(0).transpose());
    }
}

TEST(Decode, TwoLayerTanhChainByHand) {
    const ModelSpec s = toy_spec(ModelKind::PVAE);
    Rng rng(7);
    const Params p = init_params(s, rng);
    Vec z = standard_normal(5, rng);
    const Tensor& w0 = p["dec.W0"];
    const Tensor& b0 = p["dec.b0"];
    const Tensor& w1 = p["dec.W1"];
    const Tensor& b1 = p["dec.b1"];
    std::vector<double> hidden(10);
    for (int j = 0; j < 10; ++j) {
        double a = b0(0, j);
        for (int i = 0; i < 5; ++i) a += z[i] * w0(i, j);
        hidden[j] = std::tanh(a);
    }
    const Vec out = decode(z, s, p);
    for (int k = 0; k < 3; ++k) {
        double a = b1(0, k);
        for (int j = 0; j < 10; ++j) a += hidden[j] * w1(j, k);
        EXPECT_NEAR(out[k], a, 1e-13);
    }
}

TEST(Decode, BernoulliGivesProbabilities) {
    ModelSpec s = ModelSpec::binary(ModelKind::PVAE, 4, 0);
    Rng rng(8);
    Params p = init_params(s, rng);
    const Vec out = decode(standard_normal(s.latent_dim, rng), s, p);
    EXPECT_GT(out.minCoeff(), 0.0);
    EXPECT_LT(out.maxCoeff(), 1.0);
}

// ---------------------------------------------------------------------------
// missing_probs

TEST(MissingProbs, ZeroWeightsGiveHalf) {
    const ModelSpec s = toy_spec(ModelKind::GINA);
    Rng rng(9);
    Params p = init_params(s, rng);
    for (const auto& name : {"miss.W0", "miss.b0", "miss.W1", "miss.b1"}) p[name].setZero();
    const BernoulliVec pi = missing_probs(standard_normal(3, rng), standard_normal(5, rng), s, p);
    for (int d = 0; d < 3; ++d) EXPECT_EQ(pi.probs[d], 0.5);
}

TEST(MissingProbs, LinearSelfMaskingSaturates) {
    ModelSpec s = toy_spec(ModelKind::NotMIWAE);
    s.missing_net = MissingNet::Linear;
    Rng rng(10);
    Params p = init_params(s, rng);
    p["miss.W0"] = -50.0 * Tensor::Identity(3, 3);
    p["miss.b0"].setZero();
    Vec x(3);
    x << 2.0, -2.0, 3.0;
    const BernoulliVec pi = missing_probs(x, Vec::Zero(5), s, p);
    EXPECT_LT(pi.probs[0], 1e-6);
    EXPECT_GT(pi.probs[1], 1.0 - 1e-6);
    EXPECT_LT(pi.probs[2], 1e-6);
}

TEST(MissingProbs, GinaDependsOnZNotMiwaeDoesNot) {
    Rng rng(11);
    const Vec x = standard_normal(3, rng);
    const Vec z1 = standard_normal(5, rng);
    const Vec z2 = standard_normal(5, rng);
    const ModelSpec g = toy_spec(ModelKind::GINA);
    const Params pg = init_params(g, rng);
    EXPECT_GT((missing_probs(x, z1, g, pg).probs - missing_probs(x, z2, g, pg).probs).cwiseAbs().maxCoeff(), 1e-6);
    const ModelSpec n = toy_spec(ModelKind::NotMIWAE);
    const Params pn = init_params(n, rng);
    EXPECT_EQ(missing_probs(x, z1, n, pn).probs, missing_probs(x, z2, n, pn).probs);
}

TEST(MissingProbs, PvaeHasNoMissingNet) {
    const ModelSpec s = toy_spec(ModelKind::PVAE);
    Rng rng(12);
    const Params p = init_params(s, rng);
    EXPECT_THROW(missing_probs(Vec::Zero(3), Vec::Zero(5), s, p), ConfigError);
}

// ---------------------------------------------------------------------------
// iw_bound

TEST(IwBound, SingleSampleIsElbo) {
    ModelSpec s = toy_spec(ModelKind::PVAE);
    s.importance_samples = 1;
    Rng rng(13);
    const Params p = init_params(s, rng);
    Vec x(3), r(3);
    x << 0.3, -0.7, 1.1;
    r << 1, 1, 0;
    Rng noise_rng(5);
    const BoundNoise noise = BoundNoise::draw(1, s, noise_rng);
    Tape t;
    Binding b(t, p, false);
    const double bound =
        iw_bound_rows(b, s, x.transpose(), r.transpose(), Tensor(1, 0), noise).per_row.scalar();

    const DiagGaussian q = encode(x, r, s, p);
    const Vec z = reparameterize(q, noise.latent.row(0).transpose());
    const Vec f = decode(z, s, p);
    double log_px = 0.0;
    for (int d = 0; d < 3; ++d)
        if (r[d] == 1.0)
            log_px += gaussian_logpdf(Vec::Constant(1, x[d]), {Vec::Constant(1, f[d]), Vec::Constant(1, 2.0 * s.log_sigma)});
    const double elbo = log_px + gaussian_logpdf(z, DiagGaussian::standard(5)) - gaussian_logpdf(z, q);
    EXPECT_NEAR(bound, elbo, 1e-12);
}

TEST(IwBound, ConstantHalfMissingNetAddsDLogHalf) {
    const MaskedMatrix data = toy_data(14);
    ModelSpec pv = toy_spec(ModelKind::PVAE);
    ModelSpec nm = toy_spec(ModelKind::NotMIWAE);
    Rng rng(15);
    Params pn = init_params(nm, rng);
    for (const auto& name : {"miss.W0", "miss.b0", "miss.W1", "miss.b1"}) pn[name].setZero();
    Params pp;
    for (std::size_t i = 0; i < pn.size(); ++i)
        if (pn.names[i].rfind("miss.", 0) != 0) pp.add(pn.names[i], pn.values[i]);
    Rng nrng(16);
    const BoundNoise noise = BoundNoise::draw(data.rows(), nm, nrng);
    Tape t;
    Binding bn(t, pn, false);
    Binding bp(t, pp, false);
    const Tensor a = iw_bound_rows(bn, nm, data.zero_filled(), data.mask, Tensor(6, 0), noise).per_row.value();
    const Tensor c = iw_bound_rows(bp, pv, data.zero_filled(), data.mask, Tensor(6, 0), noise).per_row.value();
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a(i, 0), c(i, 0) + 3.0 * std::log(0.5), 1e-12);
}

TEST(IwBound, ConjugateToyEqualsMarginalLikelihood) {
    const testutil::Conjugate1D toy;
    for (int k : {1, 5, 20}) {
        auto [s, p] = toy.model(k);
        Rng rng(100 + k);
        for (double x : {-1.5, 0.0, 0.4, 2.2}) {
            double sum = 0.0;
            double sum2 = 0.0;
            const int reps = 10000;
            Vec xv = Vec::Constant(1, x);
            Vec rv = Vec::Ones(1);
            for (int i = 0; i < reps; ++i) {
                const double v = iw_bound(xv, rv, Vec(0), s, p, rng);
                sum += v;
                sum2 += v * v;
            }
            const double mean = sum / reps;
            const double se = std::sqrt(std::max(0.0, sum2 / reps - mean * mean) / reps);
            const double exact = toy.log_marginal(x);
            EXPECT_LE(std::abs(mean - exact), 3.0 * se + 1e-9 * std::max(1.0, std::abs(exact)))
                << "K=" << k << " x=" << x;
        }
        // unobserved x: only the prior remains and the bound is exactly zero
        EXPECT_NEAR(iw_bound(Vec::Constant(1, 123.0), Vec::Zero(1), Vec(0), s, p, rng), 0.0, 1e-12);
    }
}

TEST(IwBound, MonotoneInImportanceSamples) {
    const MaskedMatrix data = toy_data(17);
    ModelSpec s1 = toy_spec(ModelKind::GINA);
    Rng prng(18);
    const Params p = init_params(s1, prng);
    ModelSpec s10 = s1;
    s1.importance_samples = 1;
    s10.importance_samples = 10;
    std::vector<double> v1, v10;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng r1(seed);
        Rng r10(seed + 100000);
        v1.push_back(mean_bound_fixed(s1, p, data, BoundNoise::draw(data.rows(), s1, r1)));
        v10.push_back(mean_bound_fixed(s10, p, data, BoundNoise::draw(data.rows(), s10, r10)));
    }
    auto stats = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= v.size();
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, ss / (v.size() - 1)};
    };
    auto [m1, var1] = stats(v1);
    auto [m10, var10] = stats(v10);
    const double pooled_se = std::sqrt(var1 / 200.0 + var10 / 200.0);
    EXPECT_GE(m10, m1 - pooled_se);
}

TEST(IwBound, GinaReducesToPvaeWithVanishingBetaAndZeroPrior) {
    const MaskedMatrix data = toy_data(19);
    ModelSpec g = toy_spec(ModelKind::GINA);
    g.beta = 1e-300;
    const ModelSpec pv = toy_spec(ModelKind::PVAE);
    Rng rng(20);
    Params pg = init_params(g, rng);
    for (const auto& name : {"prior.Wm", "prior.bm", "prior.Wv", "prior.bv"}) pg[name].setZero();
    Params pp;
    for (std::size_t i = 0; i < pg.size(); ++i)
        if (pg.names[i].rfind("miss.", 0) != 0 && pg.names[i].rfind("prior.", 0) != 0)
            pp.add(pg.names[i], pg.values[i]);
    Rng nrng(21);
    const BoundNoise noise = BoundNoise::draw(data.rows(), g, nrng);
    Tape t;
    Binding bg(t, pg, false);
    Binding bp(t, pp, false);
    const Tensor a = iw_bound_rows(bg, g, data.zero_filled(), data.mask, data.aux, noise).per_row.value();
    const Tensor c = iw_bound_rows(bp, pv, data.zero_filled(), data.mask, Tensor(6, 0), noise).per_row.value();
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a(i, 0), c(i, 0), 1e-14 * std::max(1.0, std::abs(c(i, 0))));
}

TEST(IwBound, InvariantToUnobservedValues) {
    for (ModelKind k : {ModelKind::PVAE, ModelKind::NotMIWAE, ModelKind::GINA}) {
        MaskedMatrix data = toy_data(22);
        const ModelSpec s = toy_spec(k);
        Rng rng(23);
        const Params p = init_params(s, rng);
        Rng nrng(24);
        const BoundNoise noise = BoundNoise::draw(data.rows(), s, nrng);
        Tape t1;
        Binding b1(t1, p, false);
        const Tensor a = iw_bound_rows(b1, s, data.values, data.mask, model_aux(s, data), noise).per_row.value();
        for (Eigen::Index i = 0; i < data.rows(); ++i)
            for (Eigen::Index j = 0; j < data.cols(); ++j)
                if (data.mask(i, j) == 0.0) data.values(i, j) = 1e3 * (i + 1) - 7.0 * j;
        Tape t2;
        Binding b2(t2, p, false);
        const Tensor c = iw_bound_rows(b2, s, data.values, data.mask, model_aux(s, data), noise).per_row.value();
        EXPECT_EQ(a, c) << to_string(k);
    }
}

TEST(IwBound, GradientMatchesFiniteDifferences) {
    const MaskedMatrix data = toy_data(25);
    for (ModelKind k : {ModelKind::PVAE, ModelKind::NotMIWAE, ModelKind::GINA}) {
        const ModelSpec s = toy_spec(k);
        Rng rng(26);
        Params p = init_params(s, rng);
        Rng nrng(27);
        const BoundNoise noise = BoundNoise::draw(data.rows(), s, nrng);
        Tape t;
        Binding b(t, p);
        t.backward(mean(iw_bound_rows(b, s, data.zero_filled(), data.mask, model_aux(s, data), noise).per_row));
        const auto grads = b.grads();
        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t pi = 0; pi < p.size(); ++pi) {
            for (Eigen::Index e = 0; e < p.values[pi].size(); ++e) {
                const double orig = p.values[pi].data()[e];
                p.values[pi].data()[e] = orig + h;
                const double up = mean_bound_fixed(s, p, data, noise);
                p.values[pi].data()[e] = orig - h;
                const double down = mean_bound_fixed(s, p, data, noise);
                p.values[pi].data()[e] = orig;
                worst = std::max(worst, testutil::rel_err(grads[pi].data()[e], (up - down) / (2.0 * h)));
            }
        }
        EXPECT_LT(worst, 1e-4) << to_string(k);
    }
}

TEST(IwBound, NonFiniteTermNamed) {
    const ModelSpec s = toy_spec(ModelKind::PVAE);
    Rng rng(28);
    const Params p = init_params(s, rng);
    Vec x(3);
    x << 1e200, 0.0, 0.0;
    try {
        iw_bound(x, Vec::Ones(3), Vec(0), s, p, rng);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("log p(x_o | z)"), std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// train

TEST(Train, ZeroLearningRateKeepsInitialisation) {
    const MaskedMatrix data = toy_data(29, 20);
    const ModelSpec s = toy_spec(ModelKind::GINA);
    TrainConfig c;
    c.lr = 0.0;
    c.epochs = 3;
    c.batch_size = 7;
    c.seed = 11;
    const TrainedModel m = train(data, s, c);
    EXPECT_EQ(m.params, initialize(s, 11).params);
    EXPECT_EQ(m.trace.size(), 3u);
}

TEST(Train, Deterministic) {
    const MaskedMatrix data = toy_data(30, 40);
    const ModelSpec s = toy_spec(ModelKind::NotMIWAE);
    TrainConfig c;
    c.epochs = 5;
    c.batch_size = 16;
    c.seed = 3;
    const TrainedModel a = train(data, s, c);
    const TrainedModel b = train(data, s, c);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.trace, b.trace);
}

TEST(Train, BoundImprovesOverFirstHundredEpochs) {
    const MaskedMatrix data = toy_data(31, 100);
    for (ModelKind k : {ModelKind::PVAE, ModelKind::GINA}) {
        TrainConfig c;
        c.epochs = 100;
        c.batch_size = 25;
        c.lr = 1e-2;
        c.seed = 5;
        const TrainedModel m = train(data, toy_spec(k), c);
        ASSERT_EQ(m.trace.size(), 100u);
        EXPECT_GT(m.trace.back(), m.trace.front()) << to_string(k);
        EXPECT_TRUE(m.params.all_finite());
    }
}

TEST(Train, NonFiniteBoundAbortsWithLocation) {
    MaskedMatrix data = toy_data(32, 10);
    data.values(3, 0) = 1e200;
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 5;
    try {
        train(data, toy_spec(ModelKind::PVAE), c);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
        EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
    }
}

TEST(Train, RejectsMismatchedData) {
    const MaskedMatrix data = toy_data(33, 10, 4);
    EXPECT_THROW(train(data, toy_spec(ModelKind::PVAE, 3), TrainConfig{}), ShapeError);
    const MaskedMatrix no_aux = toy_data(33, 10, 3, false);
    EXPECT_THROW(train(no_aux, toy_spec(ModelKind::GINA), TrainConfig{}), DataError);
    ModelSpec mask_aux = toy_spec(ModelKind::GINA);
    mask_aux.aux_source = AuxSource::Mask;
    mask_aux.aux_dim = 3;
    TrainConfig c;
    c.epochs = 1;
    EXPECT_NO_THROW(train(no_aux, mask_aux, c));
}

TEST(Spec, KindInvariants) {
    ModelSpec s = toy_spec(ModelKind::PVAE);
    s.missing_net = MissingNet::Linear;
    EXPECT_THROW(s.validate(), ConfigError);
    s = toy_spec(ModelKind::NotMIWAE);
    s.missing_input = MissingInput::XZ;
    EXPECT_THROW(s.validate(), ConfigError);
    s = toy_spec(ModelKind::GINA);
    s.missing_input = MissingInput::X;
    EXPECT_THROW(s.validate(), ConfigError);
    s = toy_spec(ModelKind::GINA);
    s.importance_samples = 0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = toy_spec(ModelKind::GINA);
    s.beta = 0.0;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Spec, Presets) {
    const ModelSpec a = ModelSpec::synthetic(ModelKind::GINA, 3, 1);
    EXPECT_EQ(a.latent_dim, 5);
    EXPECT_EQ(a.decoder_hidden, std::vector<int>{10});
    EXPECT_EQ(a.encoder_hidden, (std::vector<int>{10, 10}));
    EXPECT_EQ(a.importance_samples, 5);
    EXPECT_EQ(a.log_sigma, -2.0);
    EXPECT_EQ(a.activation, Activation::Tanh);
    const ModelSpec r = ModelSpec::ratings(ModelKind::GINA, 30, 30);
    EXPECT_EQ(r.latent_dim, 20);
    EXPECT_EQ(r.feature_dim, 20);
    EXPECT_EQ(r.id_dim, 20);
    EXPECT_NEAR(std::exp(2.0 * r.log_sigma), 0.02, 1e-15);
    const ModelSpec b = ModelSpec::binary(ModelKind::GINA, 40, 40);
    EXPECT_EQ(b.latent_dim, 50);
    EXPECT_EQ(b.decoder_hidden, (std::vector<int>{20, 50}));
    EXPECT_EQ(b.beta, 0.5);
    EXPECT_EQ(b.likelihood, Likelihood::Bernoulli);
}

// ---------------------------------------------------------------------------
// impute / generate

TEST(Impute, FullyObservedRowPassesThrough) {
    const TrainedModel m = initialize(toy_spec(ModelKind::GINA), 1);
    Vec x(3);
    x << 0.25, -3.5, 7.125;
    Rng rng(1);
    const Imputation imp = impute(m, x, Vec::Ones(3), 10, rng);
    EXPECT_EQ(imp.point, x);
    for (Eigen::Index i = 0; i < imp.samples.rows(); ++i) EXPECT_EQ(Vec(imp.samples.row(i).transpose()), x);
}

TEST(Impute, ZeroDecoderGivesBias) {
    TrainedModel m = initialize(toy_spec(ModelKind::PVAE), 2);
    m.params["dec.W0"].setZero();
    m.params["dec.W1"].setZero();
    m.params["dec.b1"] << 0.5, 1.5, -2.5;
    Vec x(3);
    x << 9.0, 0.0, 0.0;
    Vec r(3);
    r << 1, 0, 0;
    Rng rng(2);
    const Imputation imp = impute(m, x, r, 7, rng);
    EXPECT_EQ(imp.point[0], 9.0);
    EXPECT_NEAR(imp.point[1], 1.5, 1e-15);
    EXPECT_NEAR(imp.point[2], -2.5, 1e-15);

    TrainedModel bm = initialize(ModelSpec::binary(ModelKind::PVAE, 3, 0), 3);
    bm.params["dec.W0"].setZero();
    bm.params["dec.W1"].setZero();
    bm.params["dec.W2"].setZero();
    bm.params["dec.b2"] << 0.0, 2.0, -1.0;
    const Imputation bi = impute(bm, Vec::Zero(3), Vec::Zero(3), 4, rng);
    EXPECT_NEAR(bi.point[1], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
    EXPECT_NEAR(bi.point[2], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
}

TEST(Impute, RejectsNonPositiveSampleCount) {
    const TrainedModel m = initialize(toy_spec(ModelKind::PVAE), 4);
    Rng rng(4);
    EXPECT_THROW(impute(m, Vec::Zero(3), Vec::Zero(3), 0, rng), ConfigError);
}

TEST(Impute, InvariantToUnobservedValues) {
    const TrainedModel m = initialize(toy_spec(ModelKind::GINA), 5);
    Vec x(3), r(3);
    x << 0.1, 0.2, 0.3;
    r << 1, 0, 1;
    Rng a(6), b(6);
    const Imputation i1 = impute(m, x, r, 20, a);
    x[1] = -4e4;
    const Imputation i2 = impute(m, x, r, 20, b);
    EXPECT_EQ(i1.point, i2.point);
    EXPECT_EQ(i1.samples, i2.samples);
}

TEST(Impute, ConjugateConditionalMean) {
    // z ~ N(0, 1), x = w z + b + sigma eps with D = 2; the encoder sees x1 only.
    const double w1 = 1.1, w2 = -0.8, b1 = 0.3, b2 = 0.5, log_sigma = -0.7;
    const double var = std::exp(2.0 * log_sigma);
    ModelSpec s = ModelSpec::synthetic(ModelKind::PVAE, 2, 0);
    s.latent_dim = 1;
    s.decoder_hidden = {};
    s.encoder_hidden = {};
    s.log_sigma = log_sigma;
    TrainedModel m = initialize(s, 7);
    m.params["dec.W0"] << w1, w2;
    m.params["dec.b0"] << b1, b2;
    const double lam = 1.0 + w1 * w1 / var;
    Tensor enc = Tensor::Zero(4, 2);
    enc(0, 0) = w1 / (var * lam);
    enc(2, 0) = -b1 * w1 / (var * lam);
    enc(2, 1) = -std::log(lam);
    m.params["enc.W0"] = enc;
    m.params["enc.b0"].setZero();

    const double x1 = 1.7;
    const double exact = b2 + w2 * w1 * (x1 - b1) / (w1 * w1 + var);
    Vec x(2), r(2);
    x << x1, 0.0;
    r << 1, 0;
    Rng rng(8);
    const int n = 20000;
    const Imputation imp = impute(m, x, r, n, rng);
    const double sd_of_mean_draw = std::abs(w2) / std::sqrt(lam);
    EXPECT_LT(std::abs(imp.point[1] - exact), 4.0 * sd_of_mean_draw / std::sqrt(static_cast<double>(n)));
}

TEST(Generate, ZeroDecoderGivesBiasPlusFixedNoise) {
    TrainedModel m = initialize(toy_spec(ModelKind::PVAE), 9);
    m.params["dec.W0"].setZero();
    m.params["dec.W1"].setZero();
    m.params["dec.b1"] << 1.0, -1.0, 2.0;
    Rng rng(9);
    const Tensor g = generate(m, Tensor(0, 0), 20000, rng);
    ASSERT_EQ(g.rows(), 20000);
    const double sigma = std::exp(-2.0);
    for (int d = 0; d < 3; ++d) {
        const double mu = g.col(d).mean();
        const double sd = std::sqrt((g.col(d).array() - mu).square().mean());
        EXPECT_NEAR(mu, m.params["dec.b1"](0, d), 4.0 * sigma / std::sqrt(20000.0));
        EXPECT_NEAR(sd, sigma, 0.02 * sigma);
    }
    EXPECT_EQ(generate(m, Tensor(0, 0), 17, rng).rows(), 17);
    EXPECT_EQ(generate(m, Tensor(0, 0), 0, rng).rows(), 0);
}

TEST(Generate, LinearDecoderMeanMatchesPriorMean) {
    ModelSpec s = toy_spec(ModelKind::GINA);
    s.decoder_hidden = {};
    TrainedModel m = initialize(s, 10);
    m.params["prior.bm"].setConstant(0.7);
    Tensor u = Tensor::Constant(1, 1, 0.5);
    const Vec prior_mean = prior(Vec::Constant(1, 0.5), s, m.params).mean;
    const Vec expected = decode(prior_mean, s, m.params);
    Rng rng(10);
    const int n = 20000;
    const Tensor g = generate(m, u, n, rng);
    for (int d = 0; d < 3; ++d) {
        const double mu = g.col(d).mean();
        const double sd = std::sqrt((g.col(d).array() - mu).square().sum() / (n - 1));
        EXPECT_LT(std::abs(mu - expected[d]), 4.0 * sd / std::sqrt(static_cast<double>(n)));
    }
}

TEST(ModelIo, RoundTripIsExact) {
    const MaskedMatrix data = toy_data(34, 20);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 8;
    const TrainedModel m = train(data, toy_spec(ModelKind::GINA), c);
    const TrainedModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    EXPECT_EQ(back.params, m.params);
    EXPECT_EQ(back.trace, m.trace);
    EXPECT_EQ(nlohmann::json(back.spec), nlohmann::json(m.spec));
    EXPECT_EQ(model_to_json(m)["format"], "gina-model-v1");
}

TEST(ModelIo, RejectsShapeMismatch) {
    const TrainedModel m = initialize(toy_spec(ModelKind::PVAE), 1);
    nlohmann::json j = model_to_json(m);
    j["params"][0]["rows"] = 99;
    EXPECT_THROW(model_from_json(j), DataError);
    j = model_to_json(m);
    j["format"] = "other";
    EXPECT_THROW(model_from_json(j), DataError);
}
