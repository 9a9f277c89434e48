#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asmr/data.hpp"
#include "asmr/objective.hpp"

namespace asmr {

struct GalleryItem {
    std::string sample_id;
    Vec embedding;  // unit norm
    PersonCategory category;
};

struct Gallery {
    std::vector<GalleryItem> items;
};

Gallery build_gallery(const ModelState& state, const Dataset& ds,
                      const std::vector<std::size_t>& sample_indices);

struct RetrievalRun {
    std::string query_id;
    std::vector<std::size_t> ranking;     // gallery indices, best first
    std::vector<std::string> ranked_ids;  // sample ids in rank order
    std::vector<double> similarities;
    std::vector<std::uint8_t> relevance;  // per rank position
};

// Rank gallery items by descending similarity to the encoded query; ties break
// by ascending sample id. k = 0 keeps the full ranking, otherwise the top k.
RetrievalRun retrieve(const CategoryQuery& query, const ModelState& state, const Gallery& gallery,
                      const AttributeSchema& schema, std::size_t k = 0);

// Fraction of runs with a relevant item in the top k.
double cmc(const std::vector<RetrievalRun>& runs, std::size_t k);
// Mean over runs of average precision (precision at each relevant rank / #relevant).
double mean_ap(const std::vector<RetrievalRun>& runs);

// Spearman rank correlation with average ranks for ties; nullopt when either
// side is constant.
std::optional<double> spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

struct DiagnosticPair {
    std::string cat_i, cat_j;
    double similarity;
    double delta;
};

struct AlignmentDiagnostic {
    std::optional<double> rho;
    std::vector<DiagnosticPair> pairs;
};

// Rank correlation between embedding-space similarity of category prototypes
// and their semantic similarity delta. Needs at least 3 categories.
AlignmentDiagnostic semantic_alignment_diagnostic(const ModelState& state,
                                                  const std::vector<PersonCategory>& categories,
                                                  AsmrVariant variant = AsmrVariant::Full);

}  // namespace asmr
