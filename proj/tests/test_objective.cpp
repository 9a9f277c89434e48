#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asmr/errors.hpp"
#include "asmr/objective.hpp"
#include "asmr/rng.hpp"
#include "oracles.hpp"

using namespace asmr;

namespace {

AttributeSchema toy3_schema() {
    return AttributeSchema({{"g0", {"a0", "a1"}}, {"g1", {"b0", "b1", "b2"}}, {"g2", {"c0", "c1"}}});
}

PersonCategory cat_of(const AttributeSchema& schema, const std::string& a, const std::string& b,
                      const std::string& c) {
    return encode_category(
        std::vector<std::pair<std::string, std::string>>{{"g0", a}, {"g1", b}, {"g2", c}}, schema);
}

Matrix unit_rows(std::size_t n, std::size_t d, Rng& rng) {
    Matrix G(n, d);
    for (double& v : G.data) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += G(i, j) * G(i, j);
        const double nrm = std::sqrt(sq);
        for (std::size_t j = 0; j < d; ++j) G(i, j) /= nrm;
    }
    return G;
}

}  // namespace

TEST_CASE("delta closed forms") {
    const AttributeSchema schema = toy3_schema();
    const PersonCategory p = cat_of(schema, "a0", "b1", "c0");
    const PersonCategory q = cat_of(schema, "a1", "b1", "c0");  // differs in one group

    Vec w(schema.d_pc(), 0.25);
    // identical pair: sigmoid(1), to a tick of double precision
    CHECK(delta(p, p, w) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    // one differing group flips two bits: sigmoid(1 - 0.5)
    CHECK(delta(p, q, w) == doctest::Approx(0.6224593312018546).epsilon(1e-12));
    // zero weights annihilate the Hamming term
    Vec zero(schema.d_pc(), 0.0);
    CHECK(delta(p, q, zero) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    // symmetry, range, identity value over random weights
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        Vec rw(schema.d_pc());
        for (double& v : rw) v = rng.uniform(-1.0, 1.0);
        const double dpq = delta(p, q, rw);
        CHECK(dpq == delta(q, p, rw));
        CHECK(dpq > 0.0);
        CHECK(dpq < 1.0);
        CHECK(delta(p, p, rw) == sigmoid(1.0));
    }

    Vec bad(schema.d_pc(), std::nan(""));
    CHECK_THROWS_AS(delta(p, q, bad), NumericError);
    CHECK_THROWS_AS(delta_from_profile(Bits{1, 0}, w), NumericError);
}

TEST_CASE("mu closed forms and brute-force agreement") {
    Matrix same(3, 4);
    for (std::size_t i = 0; i < 3; ++i) same(i, 1) = 1.0;
    CHECK(mu(same) == doctest::Approx(1.0).epsilon(1e-15));

    Matrix ortho(3, 3);
    ortho(0, 0) = ortho(1, 1) = ortho(2, 2) = 1.0;
    CHECK(mu(ortho) == doctest::Approx(0.0).epsilon(1e-15));

    Rng rng(8);
    const Matrix G = unit_rows(5, 6, rng);
    double brute = 0.0;
    std::size_t n_pairs = 0;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i + 1; j < 5; ++j) {
            double d = 0.0;
            for (std::size_t t = 0; t < 6; ++t) d += G(i, t) * G(j, t);
            brute += d;
            ++n_pairs;
        }
    brute /= static_cast<double>(n_pairs);
    CHECK(mu(G) == doctest::Approx(brute).epsilon(1e-12));

    Matrix single(1, 3);
    single(0, 0) = 1.0;
    CHECK_THROWS_AS(mu(single), NumericError);
}

TEST_CASE("asmr with two categories collapses to delta squared") {
    const AttributeSchema schema = toy3_schema();
    std::vector<PersonCategory> P{cat_of(schema, "a0", "b0", "c0"),
                                  cat_of(schema, "a1", "b2", "c0")};
    Rng rng(3);
    const Matrix G = unit_rows(2, 5, rng);
    Vec w(schema.d_pc(), 0.2);
    const AsmrResult r = regularizer(G, P, w, AsmrVariant::Full, schema.group_count());
    const double d = delta(P[0], P[1], w);
    CHECK(r.value == doctest::Approx(d * d).epsilon(1e-15));
    CHECK(std::abs(r.value - d * d) <= 1e-12);
}

TEST_CASE("asmr with identical embeddings averages delta squared over pairs") {
    const AttributeSchema schema = toy3_schema();
    std::vector<PersonCategory> P{cat_of(schema, "a0", "b0", "c0"),
                                  cat_of(schema, "a1", "b1", "c0"),
                                  cat_of(schema, "a0", "b2", "c1")};
    Matrix G(3, 4);
    for (std::size_t i = 0; i < 3; ++i) {
        G(i, 0) = 0.6;
        G(i, 2) = 0.8;
    }
    Vec w(schema.d_pc(), 0.15);
    const AsmrResult r = regularizer(G, P, w, AsmrVariant::Full, schema.group_count());
    double expected = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) {
            const double d = delta(P[i], P[j], w);
            expected += d * d;
        }
    expected /= 3.0;
    CHECK(r.value == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("asmr value and gradients match pair-enumeration plus finite differences") {
    const AttributeSchema schema = toy3_schema();
    std::vector<PersonCategory> P{
        cat_of(schema, "a0", "b0", "c0"), cat_of(schema, "a1", "b1", "c0"),
        cat_of(schema, "a0", "b2", "c1"), cat_of(schema, "a1", "b0", "c1")};
    Rng rng(12);
    Matrix G = unit_rows(4, 5, rng);
    Vec w(schema.d_pc());
    for (double& v : w) v = rng.uniform(0.05, 0.3);

    for (const AsmrVariant variant : {AsmrVariant::Full, AsmrVariant::NoDelta,
                                      AsmrVariant::UniformW, AsmrVariant::L2NormW}) {
        CAPTURE(to_string(variant));
        const AsmrResult r = regularizer(G, P, w, variant, schema.group_count());

        // brute-force value: enumerate pairs with the scalar formulas
        const Vec w_uniform(w.size(), uniform_hamming_weight(schema.group_count()));
        Vec w_l2 = w;
        {
            double nw = 0.0;
            for (double v : w) nw += v * v;
            nw = std::sqrt(nw);
            for (double& v : w_l2) v /= nw;
        }
        auto pair_delta = [&](std::size_t i, std::size_t j) {
            switch (variant) {
                case AsmrVariant::NoDelta: return 0.0;
                case AsmrVariant::UniformW: return delta(P[i], P[j], w_uniform);
                case AsmrVariant::L2NormW: return delta(P[i], P[j], w_l2);
                default: return delta(P[i], P[j], w);
            }
        };
        auto cos_ij = [&](const Matrix& M, std::size_t i, std::size_t j) {
            double num = 0.0, ni = 0.0, nj = 0.0;
            for (std::size_t t = 0; t < M.cols; ++t) {
                num += M(i, t) * M(j, t);
                ni += M(i, t) * M(i, t);
                nj += M(j, t) * M(j, t);
            }
            return num / std::sqrt(ni * nj);
        };
        double mu_b = 0.0;
        std::size_t np = 0;
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) {
                mu_b += cos_ij(G, i, j);
                ++np;
            }
        mu_b /= static_cast<double>(np);
        double value_b = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) {
                const double r_ij = cos_ij(G, i, j) - mu_b - pair_delta(i, j);
                value_b += r_ij * r_ij;
            }
        value_b /= static_cast<double>(np);
        CHECK(r.value == doctest::Approx(value_b).epsilon(1e-12));

        // finite differences on embeddings
        auto value_of_G = [&]() {
            return regularizer(G, P, w, variant, schema.group_count()).value;
        };
        double worst = 0.0;
        for (std::size_t i = 0; i < G.data.size(); ++i) {
            const double numeric = oracles::central_diff(value_of_G, &G.data[i], 1e-6);
            worst = std::max(worst, oracles::rel_err(r.d_embeddings.data[i], numeric, 1e-6));
        }
        CHECK(worst < 1e-4);

        // finite differences on the weights
        double worst_w = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double numeric = oracles::central_diff(value_of_G, &w[k], 1e-6);
            worst_w = std::max(worst_w, oracles::rel_err(r.d_w[k], numeric, 1e-6));
        }
        CHECK(worst_w < 1e-4);
        if (variant == AsmrVariant::NoDelta || variant == AsmrVariant::UniformW) {
            for (double v : r.d_w) CHECK(v == 0.0);
        }
    }
}

TEST_CASE("asmr is exactly invariant under joint permutation of categories and embeddings") {
    const AttributeSchema schema = toy3_schema();
    Rng rng(77);
    std::vector<PersonCategory> P{
        cat_of(schema, "a0", "b0", "c0"), cat_of(schema, "a1", "b1", "c0"),
        cat_of(schema, "a0", "b2", "c1"), cat_of(schema, "a1", "b0", "c1"),
        cat_of(schema, "a0", "b1", "c1")};
    Matrix G = unit_rows(5, 6, rng);
    Vec w(schema.d_pc());
    for (double& v : w) v = rng.uniform(0.05, 0.4);
    const double base = regularizer(G, P, w, AsmrVariant::Full, schema.group_count()).value;

    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    for (int trial = 0; trial < 10; ++trial) {
        rng.shuffle(perm);
        Matrix Gp(5, 6);
        std::vector<PersonCategory> Pp(5);
        for (std::size_t i = 0; i < 5; ++i) {
            Pp[i] = P[perm[i]];
            for (std::size_t j = 0; j < 6; ++j) Gp(i, j) = G(perm[i], j);
        }
        const double permuted = regularizer(Gp, Pp, w, AsmrVariant::Full, schema.group_count()).value;
        CHECK(permuted == base);  // exact, not approximate
    }
}

TEST_CASE("no_delta output is independent of categories and weights") {
    const AttributeSchema schema = toy3_schema();
    Rng rng(31);
    Matrix G = unit_rows(4, 5, rng);
    std::vector<PersonCategory> P1{
        cat_of(schema, "a0", "b0", "c0"), cat_of(schema, "a1", "b1", "c0"),
        cat_of(schema, "a0", "b2", "c1"), cat_of(schema, "a1", "b0", "c1")};
    std::vector<PersonCategory> P2{
        cat_of(schema, "a1", "b2", "c1"), cat_of(schema, "a0", "b1", "c1"),
        cat_of(schema, "a1", "b0", "c0"), cat_of(schema, "a0", "b0", "c1")};
    Vec w1(schema.d_pc(), 0.1), w2(schema.d_pc());
    for (double& v : w2) v = rng.uniform(-2.0, 2.0);
    const double v1 = regularizer(G, P1, w1, AsmrVariant::NoDelta, schema.group_count()).value;
    const double v2 = regularizer(G, P2, w2, AsmrVariant::NoDelta, schema.group_count()).value;
    CHECK(v1 == v2);
}

TEST_CASE("l2norm_w output is invariant to positive rescaling of the weights") {
    const AttributeSchema schema = toy3_schema();
    Rng rng(32);
    Matrix G = unit_rows(4, 5, rng);
    std::vector<PersonCategory> P{
        cat_of(schema, "a0", "b0", "c0"), cat_of(schema, "a1", "b1", "c0"),
        cat_of(schema, "a0", "b2", "c1"), cat_of(schema, "a1", "b0", "c1")};
    Vec w(schema.d_pc());
    for (double& v : w) v = rng.uniform(0.05, 0.5);
    Vec w_scaled = w;
    for (double& v : w_scaled) v *= 37.5;
    const double v1 = regularizer(G, P, w, AsmrVariant::L2NormW, schema.group_count()).value;
    const double v2 = regularizer(G, P, w_scaled, AsmrVariant::L2NormW, schema.group_count()).value;
    CHECK(v1 == doctest::Approx(v2).epsilon(1e-12));
}

TEST_CASE("asmr_from_similarities closed forms and shift invariance") {
    CHECK(asmr_from_similarities({0.5, 0.5, 0.5}, {0.0, 0.0, 0.0}) == 0.0);

    Rng rng(14);
    // random 6-pair instance vs direct formula
    std::vector<double> S(6), D(6);
    for (double& v : S) v = rng.uniform(-1.0, 1.0);
    for (double& v : D) v = rng.uniform(0.0, 1.0);
    double mean_s = 0.0;
    for (double v : S) mean_s += v;
    mean_s /= 6.0;
    double direct = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        const double r = S[i] - mean_s - D[i];
        direct += r * r;
    }
    direct /= 6.0;
    CHECK(asmr_from_similarities(S, D) == doctest::Approx(direct).epsilon(1e-13));

    // invariance to a constant shift of every similarity
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> S2(8), D2(8);
        for (double& v : S2) v = rng.uniform(-1.0, 1.0);
        for (double& v : D2) v = rng.uniform(0.0, 1.0);
        const double c = rng.uniform(-5.0, 5.0);
        std::vector<double> shifted = S2;
        for (double& v : shifted) v += c;
        CHECK(std::abs(asmr_from_similarities(S2, D2) -
                       asmr_from_similarities(shifted, D2)) <= 1e-12);
    }

    CHECK_THROWS_AS(asmr_from_similarities({0.1}, {0.2, 0.3}), NumericError);
}

TEST_CASE("ma_loss closed forms") {
    // single prototype: the negative set is empty and the loss is exactly zero
    Matrix F(1, 3), G(1, 3);
    F(0, 0) = 1.0;
    G(0, 0) = 1.0;
    CHECK(ma_loss(F, {0}, G, 7.0, 0.3).value == 0.0);

    // m=1, |G|=2, f aligned with g1 and orthogonal to g2, sigma=1, gamma=0
    Matrix G2(2, 3);
    G2(0, 0) = 1.0;
    G2(1, 1) = 1.0;
    const MaResult r = ma_loss(F, {0}, G2, 1.0, 0.0);
    CHECK(r.value == doctest::Approx(0.3132616875182229).epsilon(1e-12));
    CHECK(std::abs(r.value - 0.3132616875) <= 1e-9);

    // same setup with gamma = 0.1 evaluated by the scalar softmax formula
    const double lp = std::cos(std::acos(1.0 - 1e-12) + 0.1);
    const double expected = std::log(1.0 + std::exp(0.0 - lp));
    const MaResult rg = ma_loss(F, {0}, G2, 1.0, 0.1);
    CHECK(rg.value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(rg.value > r.value);  // the margin strictly increases the loss at zero angle
}

TEST_CASE("ma_loss is stable at large scale and matches a long-double softmax oracle") {
    Rng rng(44);
    const Matrix F = unit_rows(3, 6, rng);
    const Matrix G = unit_rows(4, 6, rng);
    const std::vector<std::size_t> assign{2, 0, 3};
    const double sigma = 48.0, gamma = 0.1;
    const MaResult r = ma_loss(F, assign, G, sigma, gamma);
    CHECK(std::isfinite(r.value));

    long double total = 0.0L;
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<long double> logits;
        for (std::size_t k = 0; k < 4; ++k) {
            double c = 0.0;
            for (std::size_t t = 0; t < 6; ++t) c += F(i, t) * G(k, t);
            c = std::min(1.0 - 1e-12, std::max(-1.0 + 1e-12, c));
            if (k == assign[i]) {
                logits.push_back(
                    static_cast<long double>(sigma) * std::cos(std::acos(c) + gamma));
            } else {
                logits.push_back(static_cast<long double>(sigma) * c);
            }
        }
        long double denom = 0.0L;
        for (long double l : logits) denom += std::exp(l - logits[assign[i]]);
        total += std::log(denom);
    }
    total /= 3.0L;
    CHECK(r.value == doctest::Approx(static_cast<double>(total)).epsilon(1e-10));
}

TEST_CASE("ma_loss gradients match finite differences") {
    Rng rng(55);
    Matrix F = unit_rows(3, 5, rng);
    Matrix G = unit_rows(4, 5, rng);
    const std::vector<std::size_t> assign{1, 3, 0};
    const MaResult r = ma_loss(F, assign, G, 3.0, 0.15);

    // perturbations this small keep rows inside the unit-norm tolerance
    auto value = [&]() { return ma_loss(F, assign, G, 3.0, 0.15).value; };
    double worst = 0.0;
    for (std::size_t i = 0; i < F.data.size(); ++i) {
        const double numeric = oracles::central_diff(value, &F.data[i], 1e-6);
        worst = std::max(worst, oracles::rel_err(r.d_images.data[i], numeric, 1e-6));
    }
    for (std::size_t i = 0; i < G.data.size(); ++i) {
        const double numeric = oracles::central_diff(value, &G.data[i], 1e-6);
        worst = std::max(worst, oracles::rel_err(r.d_prototypes.data[i], numeric, 1e-6));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("ma_loss is invariant under joint permutation of images and of the negative set") {
    Rng rng(66);
    Matrix F = unit_rows(4, 5, rng);
    Matrix G = unit_rows(3, 5, rng);
    std::vector<std::size_t> assign{0, 2, 1, 2};
    const double base = ma_loss(F, assign, G, 5.0, 0.1).value;

    // permute images
    Matrix F2(4, 5);
    std::vector<std::size_t> assign2(4);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    for (std::size_t i = 0; i < 4; ++i) {
        assign2[i] = assign[perm[i]];
        for (std::size_t j = 0; j < 5; ++j) F2(i, j) = F(perm[i], j);
    }
    CHECK(std::abs(ma_loss(F2, assign2, G, 5.0, 0.1).value - base) <= 1e-12);

    // permute prototypes (remapping targets)
    Matrix G2(3, 5);
    const std::vector<std::size_t> gperm{1, 2, 0};  // new index of old prototype
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 5; ++j) G2(gperm[k], j) = G(k, j);
    std::vector<std::size_t> assign3(4);
    for (std::size_t i = 0; i < 4; ++i) assign3[i] = gperm[assign[i]];
    CHECK(std::abs(ma_loss(F, assign3, G2, 5.0, 0.1).value - base) <= 1e-12);
}

TEST_CASE("ma_loss with gamma 0 increases when the positive similarity drops") {
    Rng rng(91);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix F = unit_rows(1, 6, rng);
        Matrix G = unit_rows(3, 6, rng);
        // copy the image as its own prototype, then rotate it away slightly
        for (std::size_t j = 0; j < 6; ++j) G(0, j) = F(0, j);
        const double near = ma_loss(F, {0}, G, 4.0, 0.0).value;
        Matrix G_far = G;
        for (std::size_t j = 0; j < 6; ++j) G_far(0, j) = -F(0, j);
        const double far = ma_loss(F, {0}, G_far, 4.0, 0.0).value;
        CHECK(far > near);
    }
}

TEST_CASE("ma_loss validates inputs") {
    Matrix F(1, 3), G(0, 3);
    F(0, 0) = 1.0;
    CHECK_THROWS_AS(ma_loss(F, {0}, G, 1.0, 0.0), NumericError);

    Matrix G1(1, 3);
    G1(0, 0) = 2.0;  // not unit norm
    CHECK_THROWS_AS(ma_loss(F, {0}, G1, 1.0, 0.0), NumericError);

    Matrix Fbad(1, 3);
    Fbad(0, 0) = 1.0 + 2e-4;
    Matrix Gok(1, 3);
    Gok(0, 0) = 1.0;
    CHECK_THROWS_AS(ma_loss(Fbad, {0}, Gok, 1.0, 0.0), NumericError);
}

TEST_CASE("total_loss is the advertised linear combination and fills the whole tape") {
    const AttributeSchema schema = toy3_schema();
    EncoderDims dims{8, 6, 5};
    ModelState state = init_model(schema, 4, dims, 7);
    CategoryTable table = make_category_table({cat_of(schema, "a0", "b0", "c0"),
                                               cat_of(schema, "a1", "b1", "c0"),
                                               cat_of(schema, "a0", "b2", "c1")});
    Rng rng(70);
    Batch batch;
    batch.table = &table;
    batch.features = Matrix(4, 4);
    for (double& v : batch.features.data) v = rng.normal();
    batch.category_index = {0, 1, 2, 1};

    LossConfig cfg;
    cfg.sigma = 2.0;
    cfg.gamma = 0.1;

    cfg.lambda = 0.0;
    const TotalLossResult l0 = total_loss(state, batch, cfg);
    CHECK(l0.total == l0.ma);
    CHECK(l0.reg == 0.0);
    for (double v : l0.tape.d_hamming) CHECK(v == 0.0);

    cfg.lambda = 4.0;
    const TotalLossResult l4 = total_loss(state, batch, cfg);
    CHECK(l4.ma == l0.ma);  // same alignment term
    CHECK(l4.total == doctest::Approx(l4.ma + 4.0 * l4.reg).epsilon(1e-15));
    CHECK(l4.reg > 0.0);

    // regularizer gradient reaches the weights
    double w_grad_norm = 0.0;
    for (double v : l4.tape.d_hamming) w_grad_norm += std::abs(v);
    CHECK(w_grad_norm > 0.0);

    // disabling the regularizer structurally equals lambda = 0
    LossConfig disabled = cfg;
    disabled.regularizer_enabled = false;
    const TotalLossResult ld = total_loss(state, batch, disabled);
    CHECK(ld.total == l0.total);
}

TEST_CASE("total_loss with per-batch negatives restricts the prototype set") {
    const AttributeSchema schema = toy3_schema();
    EncoderDims dims{8, 6, 5};
    ModelState state = init_model(schema, 4, dims, 7);
    CategoryTable table = make_category_table({cat_of(schema, "a0", "b0", "c0"),
                                               cat_of(schema, "a1", "b1", "c0"),
                                               cat_of(schema, "a0", "b2", "c1")});
    Rng rng(71);
    Batch batch;
    batch.table = &table;
    batch.features = Matrix(2, 4);
    for (double& v : batch.features.data) v = rng.normal();
    batch.category_index = {2, 2};  // only one category present

    LossConfig cfg;
    cfg.sigma = 2.0;
    cfg.gamma = 0.0;
    cfg.lambda = 0.0;
    cfg.negatives = NegativeSet::BatchCategories;
    // a single prototype has an empty negative set, so the loss is exactly zero
    CHECK(total_loss(state, batch, cfg).total == 0.0);
}

TEST_CASE("cls_pretrain_loss closed forms and finite differences") {
    Rng rng(90);
    // uniform logits: each group contributes log(c)
    {
        EncoderNet head;  // single layer, zero weights/bias -> all logits equal
        DenseLayer layer;
        layer.weight = Matrix(3, 4);
        layer.bias.assign(3, 0.0);
        head.normalize_output = false;
        head.layers.push_back(layer);
        Matrix trunk(2, 4);
        for (double& v : trunk.data) v = rng.normal();
        const ClsLossResult r =
            cls_pretrain_loss(trunk, {head}, {{0}, {2}});
        CHECK(r.value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    }
    // +10 logit on the truth: loss = log(1 + (c-1) e^{-10})
    {
        EncoderNet head;
        DenseLayer layer;
        layer.weight = Matrix(4, 4);
        layer.bias.assign(4, 0.0);
        layer.bias[1] = 10.0;
        head.normalize_output = false;
        head.layers.push_back(layer);
        Matrix trunk(1, 4);
        const ClsLossResult r = cls_pretrain_loss(trunk, {head}, {{1}});
        CHECK(r.value == doctest::Approx(std::log(1.0 + 3.0 * std::exp(-10.0))).epsilon(1e-10));
    }
    // gradients through heads and trunk match finite differences
    {
        Rng init(91);
        EncoderNet head = make_encoder({4, 5, 3}, false, init);
        Matrix trunk(3, 4);
        for (double& v : trunk.data) v = rng.normal();
        const std::vector<std::vector<std::size_t>> labels{{0}, {2}, {1}};
        std::vector<EncoderNet> heads{head};
        const ClsLossResult r = cls_pretrain_loss(trunk, heads, labels);

        auto value = [&]() { return cls_pretrain_loss(trunk, heads, labels).value; };
        double worst = 0.0;
        for (std::size_t l = 0; l < heads[0].layers.size(); ++l) {
            for (std::size_t i = 0; i < heads[0].layers[l].weight.data.size(); ++i) {
                const double numeric =
                    oracles::central_diff(value, &heads[0].layers[l].weight.data[i], 1e-5);
                worst = std::max(
                    worst, oracles::rel_err(r.head_grads[0].layers[l].d_weight.data[i], numeric,
                                            1e-6));
            }
            for (std::size_t i = 0; i < heads[0].layers[l].bias.size(); ++i) {
                const double numeric =
                    oracles::central_diff(value, &heads[0].layers[l].bias[i], 1e-5);
                worst = std::max(worst, oracles::rel_err(r.head_grads[0].layers[l].d_bias[i],
                                                         numeric, 1e-6));
            }
        }
        for (std::size_t i = 0; i < trunk.data.size(); ++i) {
            const double numeric = oracles::central_diff(value, &trunk.data[i], 1e-5);
            worst = std::max(worst, oracles::rel_err(r.d_trunk.data[i], numeric, 1e-6));
        }
        CHECK(worst < 1e-4);

        CHECK_THROWS_AS(cls_pretrain_loss(trunk, heads, {{5}, {0}, {0}}), NumericError);
    }
}

TEST_CASE("uniform hamming weight spans the sensitive sigmoid range") {
    // identical pairs hit sigmoid(1); a pair differing in every group hits sigmoid(0)
    const AttributeSchema schema = toy3_schema();
    const double wu = uniform_hamming_weight(schema.group_count());
    const PersonCategory a = cat_of(schema, "a0", "b0", "c0");
    const PersonCategory b = cat_of(schema, "a1", "b1", "c1");
    Vec w(schema.d_pc(), wu);
    CHECK(delta(a, b, w) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(delta(a, a, w) == doctest::Approx(sigmoid(1.0)).epsilon(1e-15));
}
