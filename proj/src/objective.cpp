#include "asmr/objective.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "asmr/errors.hpp"

namespace asmr {

namespace {

// Cosines are clamped just inside [-1, 1] before arccos so the angle
// derivative stays finite when an embedding lands exactly on a prototype.
constexpr double kCosClamp = 1e-12;
constexpr double kUnitNormTol = 1e-4;

double clamp_cos(double c) { return std::min(1.0 - kCosClamp, std::max(-1.0 + kCosClamp, c)); }
bool clamp_active(double c) { return c <= -1.0 + kCosClamp || c >= 1.0 - kCosClamp; }

void check_unit_rows(const Matrix& M, const char* what) {
    for (std::size_t i = 0; i < M.rows; ++i) {
        double sq = 0.0;
        const double* r = M.row(i);
        for (std::size_t j = 0; j < M.cols; ++j) sq += r[j] * r[j];
        if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTol)
            throw NumericError(std::string(what) + ": row " + std::to_string(i) +
                               " is not unit norm");
    }
}

}  // namespace

AsmrVariant asmr_variant_from_string(const std::string& s) {
    if (s == "full") return AsmrVariant::Full;
    if (s == "no_delta") return AsmrVariant::NoDelta;
    if (s == "uniform_w") return AsmrVariant::UniformW;
    if (s == "l2norm_w") return AsmrVariant::L2NormW;
    throw ConfigError("unknown regularizer variant '" + s + "'");
}

std::string to_string(AsmrVariant v) {
    switch (v) {
        case AsmrVariant::Full: return "full";
        case AsmrVariant::NoDelta: return "no_delta";
        case AsmrVariant::UniformW: return "uniform_w";
        case AsmrVariant::L2NormW: return "l2norm_w";
    }
    return "full";
}

void LossConfig::validate() const {
    if (!(sigma > 0.0)) throw ConfigError("loss.sigma must be > 0");
    if (gamma < 0.0 || gamma > 0.7853981633974483)
        throw ConfigError("loss.gamma must lie in [0, pi/4]");
    if (lambda < 0.0) throw ConfigError("loss.lambda must be >= 0");
}

double uniform_hamming_weight(std::size_t n_groups) {
    if (n_groups == 0) throw ConfigError("uniform_hamming_weight: no groups");
    return 1.0 / (2.0 * static_cast<double>(n_groups));
}

ModelState init_model(const AttributeSchema& schema, std::size_t feature_dim,
                      const EncoderDims& dims, std::uint64_t seed) {
    ModelState state;
    Rng img_rng(derive_seed(seed, 0x11));
    Rng cat_rng(derive_seed(seed, 0x22));
    state.image_encoder = make_encoder(
        {feature_dim, dims.hidden1, dims.hidden2, dims.embedding_dim}, true, img_rng);
    state.category_encoder = make_encoder(
        {schema.d_pc(), dims.hidden1, dims.hidden2, dims.embedding_dim}, true, cat_rng);
    state.n_groups = schema.group_count();
    state.hamming_weights.assign(schema.d_pc(), uniform_hamming_weight(state.n_groups));
    return state;
}

void attach_pretrain_heads(ModelState& state, const AttributeSchema& schema, std::uint64_t seed) {
    state.pretrain_heads.clear();
    const std::size_t d_e = state.embedding_dim();
    for (std::size_t g = 0; g < schema.group_count(); ++g) {
        Rng rng(derive_seed(seed, 0x33, g));
        state.pretrain_heads.push_back(
            make_encoder({d_e, 512, 256, 128, schema.group_size(g)}, false, rng));
    }
}

GradientTape GradientTape::like(const ModelState& state) {
    GradientTape t;
    t.image = NetGrads::like(state.image_encoder);
    t.category = NetGrads::like(state.category_encoder);
    t.d_hamming.assign(state.hamming_weights.size(), 0.0);
    for (const auto& head : state.pretrain_heads) t.heads.push_back(NetGrads::like(head));
    return t;
}

void GradientTape::zero() {
    image.zero();
    category.zero();
    d_hamming.assign(d_hamming.size(), 0.0);
    for (auto& h : heads) h.zero();
}

CategoryTable make_category_table(std::vector<PersonCategory> categories) {
    std::set<std::string> ids;
    for (const auto& c : categories)
        if (!ids.insert(c.category_id).second)
            throw DataError("category table: duplicate category '" + c.category_id + "'");
    CategoryTable table;
    table.categories = std::move(categories);
    const std::size_t n = table.categories.size();
    const std::size_t d = n ? table.categories.front().bits.size() : 0;
    table.inputs = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (table.categories[i].bits.size() != d)
            throw DataError("category table: inconsistent bit lengths");
        for (std::size_t k = 0; k < d; ++k)
            table.inputs(i, k) = static_cast<double>(table.categories[i].bits[k]);
    }
    return table;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double delta_from_profile(const Bits& profile, const Vec& w) {
    if (profile.size() != w.size())
        throw NumericError("delta: profile length " + std::to_string(profile.size()) +
                           " != weight length " + std::to_string(w.size()));
    if (!all_finite(w)) throw NumericError("delta: non-finite hamming weight");
    double z = 1.0;
    for (std::size_t k = 0; k < w.size(); ++k)
        if (profile[k]) z -= w[k];
    return sigmoid(z);
}

double delta(const PersonCategory& a, const PersonCategory& b, const Vec& w) {
    return delta_from_profile(hamming_profile(a, b), w);
}

namespace {

// cosine similarity of rows a, b given the raw dot product and row norms
inline double cosine(double raw, double na, double nb) { return raw / (na * nb); }

Vec row_norms(const Matrix& G) {
    Vec norms(G.rows, 0.0);
    for (std::size_t i = 0; i < G.rows; ++i) {
        const double* r = G.row(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < G.cols; ++j) sq += r[j] * r[j];
        if (sq == 0.0) throw NumericError("cosine: zero embedding row " + std::to_string(i));
        norms[i] = std::sqrt(sq);
    }
    return norms;
}

}  // namespace

double mu(const Matrix& G) {
    if (G.rows < 2) throw NumericError("mu: need at least 2 embeddings");
    const Vec norms = row_norms(G);
    Matrix S(G.rows, G.rows);
    gemm_nt(G, G, S);
    std::vector<double> pairs;
    pairs.reserve(G.rows * (G.rows - 1) / 2);
    for (std::size_t i = 0; i + 1 < G.rows; ++i)
        for (std::size_t j = i + 1; j < G.rows; ++j)
            pairs.push_back(cosine(S(i, j), norms[i], norms[j]));
    const double n_pairs = static_cast<double>(pairs.size());
    return sorted_sum(std::move(pairs)) / n_pairs;
}

AsmrResult regularizer(const Matrix& G, const std::vector<PersonCategory>& P, const Vec& w,
                AsmrVariant variant, std::size_t n_groups) {
    const std::size_t n = G.rows;
    if (n < 2) throw NumericError("asmr: need at least 2 categories");
    if (P.size() != n)
        throw NumericError("asmr: " + std::to_string(P.size()) + " categories for " +
                           std::to_string(n) + " embeddings");

    // effective weights per variant
    Vec w_eff;
    double w_l2 = 0.0;
    switch (variant) {
        case AsmrVariant::Full: w_eff = w; break;
        case AsmrVariant::NoDelta: break;
        case AsmrVariant::UniformW:
            w_eff.assign(w.size(), uniform_hamming_weight(n_groups));
            break;
        case AsmrVariant::L2NormW: {
            w_l2 = norm2(w);
            if (w_l2 == 0.0) throw NumericError("asmr: l2norm_w with zero weight vector");
            w_eff = w;
            for (double& v : w_eff) v /= w_l2;
            break;
        }
    }
    const bool use_delta = variant != AsmrVariant::NoDelta;

    const Vec norms = row_norms(G);
    Matrix S(n, n);
    gemm_nt(G, G, S);

    const std::size_t n_pairs = n * (n - 1) / 2;
    const double np = static_cast<double>(n_pairs);
    std::vector<double> s_pair(n_pairs), d_pair(n_pairs, 0.0);
    std::size_t idx = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++idx) {
            s_pair[idx] = cosine(S(i, j), norms[i], norms[j]);
            if (use_delta) d_pair[idx] = delta_from_profile(hamming_profile(P[i], P[j]), w_eff);
        }
    }
    const double mu_val = sorted_sum(std::vector<double>(s_pair)) / np;

    std::vector<double> sq(n_pairs);
    double r_sum = 0.0;
    for (std::size_t t = 0; t < n_pairs; ++t) {
        const double r = s_pair[t] - mu_val - d_pair[t];
        sq[t] = r * r;
        r_sum += r;
    }
    const double r_mean = r_sum / np;

    AsmrResult out;
    out.value = sorted_sum(std::move(sq)) / np;
    out.d_embeddings = Matrix(n, G.cols);
    out.d_w.assign(w.size(), 0.0);

    // dR/ds_ab = (2/np)(r_ab - r_mean); mu is differentiated through.
    Matrix coef(n, n);
    idx = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++idx) {
            const double r = s_pair[idx] - mu_val - d_pair[idx];
            const double c = 2.0 / np * (r - r_mean);
            coef(i, j) = c;
            coef(j, i) = c;
        }
    }

    // ds_ab/dg_a = g_b/(|g_a||g_b|) - s_ab g_a/|g_a|^2
    Matrix scaled(n, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            scaled(a, b) = a == b ? 0.0 : coef(a, b) / (norms[a] * norms[b]);
    gemm_nn(scaled, G, out.d_embeddings);
    for (std::size_t a = 0; a < n; ++a) {
        double radial = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            if (b == a) continue;
            radial += coef(a, b) * cosine(S(a, b), norms[a], norms[b]);
        }
        const double scale = -radial / (norms[a] * norms[a]);
        double* row = out.d_embeddings.row(a);
        const double* g = G.row(a);
        for (std::size_t j = 0; j < G.cols; ++j) row[j] += scale * g[j];
    }

    // dR/dw: only the full and l2norm_w variants train w.
    if (variant == AsmrVariant::Full || variant == AsmrVariant::L2NormW) {
        Vec d_eff(w.size(), 0.0);
        idx = 0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j, ++idx) {
                const double r = s_pair[idx] - mu_val - d_pair[idx];
                const double d = d_pair[idx];
                const double k = 2.0 / np * r * d * (1.0 - d);
                const Bits h = hamming_profile(P[i], P[j]);
                for (std::size_t t = 0; t < h.size(); ++t)
                    if (h[t]) d_eff[t] += k;
            }
        }
        if (variant == AsmrVariant::Full) {
            out.d_w = std::move(d_eff);
        } else {
            const double proj = dot(w_eff, d_eff);
            for (std::size_t t = 0; t < w.size(); ++t)
                out.d_w[t] = (d_eff[t] - proj * w_eff[t]) / w_l2;
        }
    }
    return out;
}

double asmr_from_similarities(const std::vector<double>& S, const std::vector<double>& D) {
    if (S.size() != D.size()) throw NumericError("asmr_from_similarities: size mismatch");
    if (S.empty()) throw NumericError("asmr_from_similarities: no pairs");
    const double n = static_cast<double>(S.size());
    const double mean_s = sorted_sum(std::vector<double>(S)) / n;
    std::vector<double> sq(S.size());
    for (std::size_t i = 0; i < S.size(); ++i) {
        const double r = S[i] - mean_s - D[i];
        sq[i] = r * r;
    }
    return sorted_sum(std::move(sq)) / n;
}

MaResult ma_loss(const Matrix& F, const std::vector<std::size_t>& assignment, const Matrix& G,
                 double sigma, double gamma) {
    const std::size_t m = F.rows;
    const std::size_t n = G.rows;
    if (n == 0) throw NumericError("ma_loss: empty prototype set");
    if (assignment.size() != m) throw NumericError("ma_loss: assignment size mismatch");
    if (F.cols != G.cols) throw NumericError("ma_loss: embedding dim mismatch");
    for (std::size_t t : assignment)
        if (t >= n) throw NumericError("ma_loss: assignment index out of range");
    check_unit_rows(F, "ma_loss images");
    check_unit_rows(G, "ma_loss prototypes");

    Matrix S(m, n);
    gemm_nt(F, G, S);

    std::vector<double> per_image(m, 0.0);
    Matrix E(m, n);
    const double inv_m = 1.0 / static_cast<double>(m);
    const std::int64_t mi = static_cast<std::int64_t>(m);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && mi > 1)
    for (std::int64_t ii = 0; ii < mi; ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const std::size_t t = assignment[i];
        const double* s = S.row(i);
        double* e = E.row(i);

        const double c_pos = clamp_cos(s[t]);
        const double angle = std::acos(c_pos);
        const double lp = sigma * std::cos(angle + gamma);

        double mx = lp;
        for (std::size_t k = 0; k < n; ++k)
            if (k != t) mx = std::max(mx, sigma * clamp_cos(s[k]));
        double sum_exp = std::exp(lp - mx);
        for (std::size_t k = 0; k < n; ++k)
            if (k != t) sum_exp += std::exp(sigma * clamp_cos(s[k]) - mx);
        per_image[i] = mx + std::log(sum_exp) - lp;

        // softmax over the n logit slots
        const double q_pos = std::exp(lp - mx) / sum_exp;
        const double dl_dc =
            clamp_active(s[t])
                ? 0.0
                : sigma * std::sin(angle + gamma) / std::sqrt(1.0 - c_pos * c_pos);
        e[t] = (q_pos - 1.0) * inv_m * dl_dc;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == t) continue;
            const double q = std::exp(sigma * clamp_cos(s[k]) - mx) / sum_exp;
            e[k] = q * inv_m * (clamp_active(s[k]) ? 0.0 : sigma);
        }
    }

    MaResult out;
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) total += per_image[i];
    out.value = total * inv_m;
    out.d_images = Matrix(m, F.cols);
    out.d_prototypes = Matrix(n, G.cols);
    gemm_nn(E, G, out.d_images);
    gemm_tn(E, F, out.d_prototypes);
    return out;
}

TotalLossResult total_loss(const ModelState& state, const Batch& batch, const LossConfig& cfg) {
    cfg.validate();
    if (batch.table == nullptr) throw NumericError("total_loss: batch has no category table");
    if (batch.features.rows == 0) throw NumericError("total_loss: empty batch");
    if (batch.category_index.size() != batch.features.rows)
        throw NumericError("total_loss: assignment size mismatch");

    // Optionally restrict the prototype set to categories present in the batch.
    const CategoryTable* table = batch.table;
    CategoryTable local;
    std::vector<std::size_t> assignment = batch.category_index;
    if (cfg.negatives == NegativeSet::BatchCategories) {
        std::vector<std::size_t> remap(batch.table->categories.size(), AttributeSchema::npos);
        std::vector<PersonCategory> cats;
        for (auto& idx : assignment) {
            if (idx >= batch.table->categories.size())
                throw NumericError("total_loss: category index out of range");
            if (remap[idx] == AttributeSchema::npos) {
                remap[idx] = cats.size();
                cats.push_back(batch.table->categories[idx]);
            }
            idx = remap[idx];
        }
        local = make_category_table(std::move(cats));
        table = &local;
    }

    ForwardCache img_cache, cat_cache;
    forward_batch(state.image_encoder, batch.features, img_cache);
    forward_batch(state.category_encoder, table->inputs, cat_cache);
    const Matrix& F = img_cache.output;
    const Matrix& G = cat_cache.output;

    TotalLossResult out;
    out.tape = GradientTape::like(state);

    MaResult ma = ma_loss(F, assignment, G, cfg.sigma, cfg.gamma);
    out.ma = ma.value;

    Matrix dG = std::move(ma.d_prototypes);
    const bool with_reg = cfg.regularizer_enabled && cfg.lambda != 0.0 && G.rows >= 2;
    if (with_reg) {
        AsmrResult reg = regularizer(G, table->categories, state.hamming_weights, cfg.variant,
                              state.n_groups);
        out.reg = reg.value;
        for (std::size_t i = 0; i < dG.data.size(); ++i)
            dG.data[i] += cfg.lambda * reg.d_embeddings.data[i];
        for (std::size_t k = 0; k < out.tape.d_hamming.size(); ++k)
            out.tape.d_hamming[k] = cfg.lambda * reg.d_w[k];
    }
    out.total = ma.value + cfg.lambda * out.reg;
    if (!std::isfinite(out.total)) throw NumericError("total_loss: non-finite loss");

    backward_batch(state.image_encoder, img_cache, ma.d_images, out.tape.image);
    backward_batch(state.category_encoder, cat_cache, dG, out.tape.category);
    return out;
}

ClsLossResult cls_pretrain_loss(const Matrix& trunk_out, const std::vector<EncoderNet>& heads,
                                const std::vector<std::vector<std::size_t>>& labels) {
    const std::size_t m = trunk_out.rows;
    if (heads.empty()) throw NumericError("cls_pretrain_loss: no heads");
    if (labels.size() != m) throw NumericError("cls_pretrain_loss: label rows != batch size");
    for (const auto& row : labels)
        if (row.size() != heads.size())
            throw NumericError("cls_pretrain_loss: label columns != head count");

    ClsLossResult out;
    out.d_trunk = Matrix(m, trunk_out.cols);
    const double inv_m = 1.0 / static_cast<double>(m);

    for (std::size_t g = 0; g < heads.size(); ++g) {
        const EncoderNet& head = heads[g];
        const std::size_t classes = head.output_dim();
        ForwardCache cache;
        forward_batch(head, trunk_out, cache);
        const Matrix& logits = cache.output;

        Matrix d_logits(m, classes);
        std::vector<double> per_image(m, 0.0);
        const std::int64_t mi = static_cast<std::int64_t>(m);
        const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && mi > 1)
        for (std::int64_t ii = 0; ii < mi; ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            const std::size_t y = labels[i][g];
            if (y >= classes) {
                per_image[i] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double* l = logits.row(i);
            double mx = l[0];
            for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, l[c]);
            double sum_exp = 0.0;
            for (std::size_t c = 0; c < classes; ++c) sum_exp += std::exp(l[c] - mx);
            per_image[i] = mx + std::log(sum_exp) - l[y];
            double* dl = d_logits.row(i);
            for (std::size_t c = 0; c < classes; ++c) {
                const double q = std::exp(l[c] - mx) / sum_exp;
                dl[c] = (q - (c == y ? 1.0 : 0.0)) * inv_m;
            }
        }
        double group_loss = 0.0;
        for (double v : per_image) group_loss += v;
        if (!std::isfinite(group_loss))
            throw NumericError("cls_pretrain_loss: label out of range in group " +
                               std::to_string(g));
        out.value += group_loss * inv_m;

        out.head_grads.push_back(NetGrads::like(head));
        Matrix d_in;
        backward_batch(head, cache, d_logits, out.head_grads.back(), &d_in);
        for (std::size_t i = 0; i < out.d_trunk.data.size(); ++i)
            out.d_trunk.data[i] += d_in.data[i];
    }
    return out;
}

}  // namespace asmr
