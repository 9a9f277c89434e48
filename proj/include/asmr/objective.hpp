#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asmr/diffnet.hpp"
#include "asmr/linalg.hpp"
#include "asmr/schema.hpp"

namespace asmr {

enum class AsmrVariant { Full, NoDelta, UniformW, L2NormW };
enum class NegativeSet { AllCategories, BatchCategories };

AsmrVariant asmr_variant_from_string(const std::string& s);
std::string to_string(AsmrVariant v);

struct LossConfig {
    double sigma = 32.0;   // scale
    double gamma = 0.1;    // angular margin, radians
    double lambda = 4.0;   // regularizer weight
    AsmrVariant variant = AsmrVariant::Full;
    bool regularizer_enabled = true;
    NegativeSet negatives = NegativeSet::AllCategories;

    void validate() const;
};

// Complete trainable state: both encoders, the per-bit Hamming weights, and
// (during pretraining only) the per-group classifier heads.
struct ModelState {
    EncoderNet image_encoder;
    EncoderNet category_encoder;
    Vec hamming_weights;
    std::vector<EncoderNet> pretrain_heads;
    std::size_t n_groups = 0;

    std::size_t embedding_dim() const { return image_encoder.output_dim(); }
};

struct EncoderDims {
    std::size_t hidden1 = 512;
    std::size_t hidden2 = 128;
    std::size_t embedding_dim = 128;
};

// Identical pairs start at sigmoid(1) and fully different pairs at
// sigmoid(0), spanning the sensitive range of the sigmoid.
double uniform_hamming_weight(std::size_t n_groups);

ModelState init_model(const AttributeSchema& schema, std::size_t feature_dim,
                      const EncoderDims& dims, std::uint64_t seed);
// One classifier stack per attribute group on top of the image embedding:
// embedding_dim -> 512 -> 256 -> 128 -> group size.
void attach_pretrain_heads(ModelState& state, const AttributeSchema& schema, std::uint64_t seed);

struct GradientTape {
    NetGrads image;
    NetGrads category;
    Vec d_hamming;
    std::vector<NetGrads> heads;

    static GradientTape like(const ModelState& state);
    void zero();
};

// The unique training categories: the domain of the prototype set, with their
// binary vectors laid out as encoder input rows.
struct CategoryTable {
    std::vector<PersonCategory> categories;
    Matrix inputs;  // n x d_pc
};
CategoryTable make_category_table(std::vector<PersonCategory> categories);

struct Batch {
    Matrix features;                          // m x feature_dim
    std::vector<std::size_t> category_index;  // per image, into the table
    const CategoryTable* table = nullptr;
};

double sigmoid(double x);

// Semantic similarity of two categories: sigmoid(1 - sum_k w_k |p_i(k)-p_j(k)|).
double delta(const PersonCategory& a, const PersonCategory& b, const Vec& w);
double delta_from_profile(const Bits& profile, const Vec& w);

// Mean cosine similarity over all unordered pairs of rows. |G| >= 2.
double mu(const Matrix& G);

struct AsmrResult {
    double value = 0.0;
    Matrix d_embeddings;  // n x d
    Vec d_w;              // d_pc, zero unless the variant trains w
};

// Mean over unordered pairs of (s_ij - mu - delta_ij)^2, with mu
// differentiated through. Pair terms are accumulated order-independently, so
// the value is exactly invariant under joint permutation of (G, P).
AsmrResult regularizer(const Matrix& G, const std::vector<PersonCategory>& P, const Vec& w,
                AsmrVariant variant, std::size_t n_groups);

// Factored core: mean of (S_i - mean(S) - D_i)^2 over given pair values.
double asmr_from_similarities(const std::vector<double>& S, const std::vector<double>& D);

struct MaResult {
    double value = 0.0;
    Matrix d_images;      // m x d
    Matrix d_prototypes;  // n x d
};

// Angular-margin softmax over all category prototypes: each image is pulled
// toward its own prototype (with additive angle margin gamma) and pushed from
// every other one. Log-sum-exp stabilized; inputs must be unit vectors.
MaResult ma_loss(const Matrix& F, const std::vector<std::size_t>& assignment, const Matrix& G,
                 double sigma, double gamma);

struct TotalLossResult {
    double total = 0.0;
    double ma = 0.0;
    double reg = 0.0;  // regularizer value (pre-lambda)
    GradientTape tape;
};

TotalLossResult total_loss(const ModelState& state, const Batch& batch, const LossConfig& cfg);

struct ClsLossResult {
    double value = 0.0;
    std::vector<NetGrads> head_grads;
    Matrix d_trunk;  // m x embedding_dim
};

// Sum over groups of mean softmax cross-entropy of each head against the
// group's ground-truth attribute. labels[i][g] indexes into group g.
ClsLossResult cls_pretrain_loss(const Matrix& trunk_out, const std::vector<EncoderNet>& heads,
                                const std::vector<std::vector<std::size_t>>& labels);

}  // namespace asmr
