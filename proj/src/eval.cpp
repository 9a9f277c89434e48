#include "asmr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asmr/errors.hpp"

namespace asmr {

Gallery build_gallery(const ModelState& state, const Dataset& ds,
                      const std::vector<std::size_t>& sample_indices) {
    Gallery g;
    if (sample_indices.empty()) return g;
    Matrix X(sample_indices.size(), ds.feature_dim);
    for (std::size_t r = 0; r < sample_indices.size(); ++r) {
        const Sample& s = ds.samples[sample_indices[r]];
        std::copy(s.features.begin(), s.features.end(), X.row(r));
    }
    ForwardCache cache;
    forward_batch(state.image_encoder, X, cache);
    g.items.reserve(sample_indices.size());
    for (std::size_t r = 0; r < sample_indices.size(); ++r) {
        const Sample& s = ds.samples[sample_indices[r]];
        GalleryItem item;
        item.sample_id = s.id;
        item.embedding.assign(cache.output.row(r), cache.output.row(r) + cache.output.cols);
        item.category = s.category;
        g.items.push_back(std::move(item));
    }
    return g;
}

RetrievalRun retrieve(const CategoryQuery& query, const ModelState& state, const Gallery& gallery,
                      const AttributeSchema& schema, std::size_t k) {
    if (gallery.items.empty()) throw DataError("retrieve: empty gallery");
    Vec q_bits(query.bits.size());
    for (std::size_t i = 0; i < query.bits.size(); ++i) q_bits[i] = query.bits[i];
    const Vec q = forward(state.category_encoder, q_bits);

    const std::size_t n = gallery.items.size();
    std::vector<double> sims(n, 0.0);
    const std::int64_t ni = static_cast<std::int64_t>(n);
    const bool par = parallel_kernels();
#pragma omp parallel for schedule(static) if (par && ni > 1)
    for (std::int64_t i = 0; i < ni; ++i)
        sims[static_cast<std::size_t>(i)] = dot(q, gallery.items[static_cast<std::size_t>(i)].embedding);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return gallery.items[a].sample_id < gallery.items[b].sample_id;
    });
    if (k > 0 && k < n) order.resize(k);

    RetrievalRun run;
    for (std::size_t gi : order) {
        run.ranking.push_back(gi);
        run.ranked_ids.push_back(gallery.items[gi].sample_id);
        run.similarities.push_back(sims[gi]);
        run.relevance.push_back(matches_on_specified(query, gallery.items[gi].category, schema) ? 1
                                                                                                : 0);
    }
    return run;
}

namespace {

std::size_t relevant_count(const RetrievalRun& run) {
    std::size_t r = 0;
    for (std::uint8_t v : run.relevance) r += v;
    return r;
}

}  // namespace

double cmc(const std::vector<RetrievalRun>& runs, std::size_t k) {
    if (k < 1) throw NumericError("cmc: k must be >= 1");
    if (runs.empty()) throw NumericError("cmc: no retrieval runs");
    std::size_t hits = 0;
    for (const auto& run : runs) {
        if (relevant_count(run) == 0)
            throw NumericError("cmc: run '" + run.query_id + "' has no relevant item");
        const std::size_t upto = std::min(k, run.relevance.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (run.relevance[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(runs.size());
}

double mean_ap(const std::vector<RetrievalRun>& runs) {
    if (runs.empty()) throw NumericError("mean_ap: no retrieval runs");
    double total = 0.0;
    for (const auto& run : runs) {
        const std::size_t r = relevant_count(run);
        if (r == 0) throw NumericError("mean_ap: run '" + run.query_id + "' has no relevant item");
        double ap = 0.0;
        std::size_t seen = 0;
        for (std::size_t i = 0; i < run.relevance.size(); ++i) {
            if (run.relevance[i]) {
                ++seen;
                ap += static_cast<double>(seen) / static_cast<double>(i + 1);
            }
        }
        total += ap / static_cast<double>(r);
    }
    return total / static_cast<double>(runs.size());
}

namespace {

// average ranks for ties, 1-based
std::vector<double> ranks_of(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::optional<double> spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw NumericError("spearman: length mismatch");
    if (a.size() < 2) throw NumericError("spearman: need at least 2 observations");
    const std::vector<double> ra = ranks_of(a);
    const std::vector<double> rb = ranks_of(b);
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += ra[i];
        mean_b += rb[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
    return cov / std::sqrt(var_a * var_b);
}

AlignmentDiagnostic semantic_alignment_diagnostic(const ModelState& state,
                                                  const std::vector<PersonCategory>& categories,
                                                  AsmrVariant variant) {
    if (categories.size() < 3)
        throw NumericError("alignment diagnostic: need at least 3 categories");

    Vec w_eff = state.hamming_weights;
    if (variant == AsmrVariant::UniformW)
        w_eff.assign(w_eff.size(), uniform_hamming_weight(state.n_groups));
    if (variant == AsmrVariant::L2NormW) {
        const double nw = norm2(w_eff);
        if (nw == 0.0) throw NumericError("alignment diagnostic: zero weight vector");
        for (double& v : w_eff) v /= nw;
    }

    const std::size_t n = categories.size();
    Matrix X(n, categories.front().bits.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < categories[i].bits.size(); ++k)
            X(i, k) = categories[i].bits[k];
    ForwardCache cache;
    forward_batch(state.category_encoder, X, cache);
    Matrix S(n, n);
    gemm_nt(cache.output, cache.output, S);

    AlignmentDiagnostic diag;
    std::vector<double> sims, deltas;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = S(i, j);
            const double d = delta(categories[i], categories[j], w_eff);
            sims.push_back(s);
            deltas.push_back(d);
            diag.pairs.push_back({categories[i].category_id, categories[j].category_id, s, d});
        }
    }
    diag.rho = spearman_rho(sims, deltas);
    return diag;
}

}  // namespace asmr
