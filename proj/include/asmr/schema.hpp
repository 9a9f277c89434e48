#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace asmr {

using Bits = std::vector<std::uint8_t>;

struct AttributeGroup {
    std::string name;
    std::vector<std::string> attributes;
};

// Ordered attribute groups. The binary layout of every category vector is the
// concatenation of one-hot group slices in declaration order; bit k of any
// vector corresponds to the k-th attribute in file order.
class AttributeSchema {
  public:
    AttributeSchema() = default;
    explicit AttributeSchema(std::vector<AttributeGroup> groups);

    static AttributeSchema from_json(const nlohmann::json& j);
    static AttributeSchema load(const std::filesystem::path& file);
    nlohmann::json to_json() const;

    const std::vector<AttributeGroup>& groups() const { return groups_; }
    std::size_t group_count() const { return groups_.size(); }
    std::size_t d_pc() const { return d_pc_; }
    std::size_t group_offset(std::size_t gi) const { return offsets_[gi]; }
    std::size_t group_size(std::size_t gi) const { return groups_[gi].attributes.size(); }

    // index of the group, or npos
    std::size_t group_index(std::string_view name) const;
    // index of the attribute within group gi, or npos
    std::size_t attribute_index(std::size_t gi, std::string_view attr) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  private:
    std::vector<AttributeGroup> groups_;
    std::vector<std::size_t> offsets_;
    std::size_t d_pc_ = 0;
};

// A complete category: exactly one attribute per group, as a binary vector.
struct PersonCategory {
    Bits bits;
    std::string category_id;
};

// A retrieval query that may leave groups unspecified. Blank groups encode as
// an all-zero slice; relevance judgments consider specified groups only.
struct CategoryQuery {
    Bits bits;
    std::vector<bool> specified;  // per group
};

PersonCategory encode_category(const std::vector<std::pair<std::string, std::string>>& attrs,
                               const AttributeSchema& schema);
PersonCategory encode_category(const std::map<std::string, std::string>& attrs,
                               const AttributeSchema& schema);
std::map<std::string, std::string> decode_category(const PersonCategory& p,
                                                   const AttributeSchema& schema);
// Per-group attribute indices of a valid category (used as classification labels).
std::vector<std::size_t> category_labels(const PersonCategory& p, const AttributeSchema& schema);

// Elementwise |p_i(k) - p_j(k)|.
Bits hamming_profile(const PersonCategory& a, const PersonCategory& b);

CategoryQuery encode_query(const std::vector<std::pair<std::string, std::string>>& attrs,
                           const AttributeSchema& schema);
CategoryQuery query_from_category(const PersonCategory& p, const AttributeSchema& schema);
bool matches_on_specified(const CategoryQuery& q, const PersonCategory& p,
                          const AttributeSchema& schema);

// Canonical id: attribute names joined by '|' in group order.
std::string canonical_category_id(const PersonCategory& p, const AttributeSchema& schema);

// Validates the one-hot-per-group invariant; throws DataError naming the group.
void validate_category(const PersonCategory& p, const AttributeSchema& schema);

}  // namespace asmr
