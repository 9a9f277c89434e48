#include "asmr/schema.hpp"

#include <fstream>
#include <set>

#include "asmr/errors.hpp"

namespace asmr {

AttributeSchema::AttributeSchema(std::vector<AttributeGroup> groups) : groups_(std::move(groups)) {
    if (groups_.empty()) throw DataError("schema: no attribute groups");
    std::set<std::string> group_names;
    offsets_.reserve(groups_.size());
    for (const auto& g : groups_) {
        if (g.name.empty()) throw DataError("schema: empty group name");
        if (!group_names.insert(g.name).second)
            throw DataError("schema: duplicate group name '" + g.name + "'");
        if (g.attributes.size() < 2)
            throw DataError("schema: group '" + g.name + "' needs at least 2 attributes");
        std::set<std::string> attr_names;
        for (const auto& a : g.attributes) {
            if (a.empty()) throw DataError("schema: empty attribute name in group '" + g.name + "'");
            if (!attr_names.insert(a).second)
                throw DataError("schema: duplicate attribute '" + a + "' in group '" + g.name + "'");
        }
        offsets_.push_back(d_pc_);
        d_pc_ += g.attributes.size();
    }
}

AttributeSchema AttributeSchema::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("groups") || !j["groups"].is_array())
        throw DataError("schema: expected an object with a top-level 'groups' array");
    std::vector<AttributeGroup> groups;
    for (const auto& gj : j["groups"]) {
        AttributeGroup g;
        if (!gj.is_object() || !gj.contains("name") || !gj.contains("attributes"))
            throw DataError("schema: each group needs 'name' and 'attributes'");
        g.name = gj["name"].get<std::string>();
        for (const auto& aj : gj["attributes"]) g.attributes.push_back(aj.get<std::string>());
        groups.push_back(std::move(g));
    }
    return AttributeSchema(std::move(groups));
}

AttributeSchema AttributeSchema::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("schema: cannot open " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("schema: " + file.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json AttributeSchema::to_json() const {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : groups_) {
        groups.push_back({{"name", g.name}, {"attributes", g.attributes}});
    }
    return {{"groups", groups}};
}

std::size_t AttributeSchema::group_index(std::string_view name) const {
    for (std::size_t i = 0; i < groups_.size(); ++i)
        if (groups_[i].name == name) return i;
    return npos;
}

std::size_t AttributeSchema::attribute_index(std::size_t gi, std::string_view attr) const {
    const auto& attrs = groups_[gi].attributes;
    for (std::size_t i = 0; i < attrs.size(); ++i)
        if (attrs[i] == attr) return i;
    return npos;
}

PersonCategory encode_category(const std::vector<std::pair<std::string, std::string>>& attrs,
                               const AttributeSchema& schema) {
    std::vector<bool> seen(schema.group_count(), false);
    PersonCategory p;
    p.bits.assign(schema.d_pc(), 0);
    for (const auto& [group, attr] : attrs) {
        const std::size_t gi = schema.group_index(group);
        if (gi == AttributeSchema::npos) throw DataError("encode: unknown group '" + group + "'");
        if (seen[gi]) throw DataError("encode: duplicate group '" + group + "'");
        seen[gi] = true;
        const std::size_t ai = schema.attribute_index(gi, attr);
        if (ai == AttributeSchema::npos)
            throw DataError("encode: unknown attribute '" + attr + "' in group '" + group + "'");
        p.bits[schema.group_offset(gi) + ai] = 1;
    }
    for (std::size_t gi = 0; gi < schema.group_count(); ++gi)
        if (!seen[gi]) throw DataError("encode: missing group '" + schema.groups()[gi].name + "'");
    p.category_id = canonical_category_id(p, schema);
    return p;
}

PersonCategory encode_category(const std::map<std::string, std::string>& attrs,
                               const AttributeSchema& schema) {
    std::vector<std::pair<std::string, std::string>> v(attrs.begin(), attrs.end());
    return encode_category(v, schema);
}

void validate_category(const PersonCategory& p, const AttributeSchema& schema) {
    if (p.bits.size() != schema.d_pc())
        throw DataError("category: bit vector length " + std::to_string(p.bits.size()) +
                        " does not match schema d_pc " + std::to_string(schema.d_pc()));
    for (std::size_t gi = 0; gi < schema.group_count(); ++gi) {
        const std::size_t off = schema.group_offset(gi);
        std::size_t set = 0;
        for (std::size_t k = 0; k < schema.group_size(gi); ++k) set += p.bits[off + k] ? 1 : 0;
        if (set != 1)
            throw DataError("category: group '" + schema.groups()[gi].name + "' has " +
                            std::to_string(set) + " set bits, expected exactly 1");
    }
}

std::map<std::string, std::string> decode_category(const PersonCategory& p,
                                                   const AttributeSchema& schema) {
    validate_category(p, schema);
    std::map<std::string, std::string> out;
    for (std::size_t gi = 0; gi < schema.group_count(); ++gi) {
        const std::size_t off = schema.group_offset(gi);
        for (std::size_t k = 0; k < schema.group_size(gi); ++k) {
            if (p.bits[off + k]) {
                out[schema.groups()[gi].name] = schema.groups()[gi].attributes[k];
                break;
            }
        }
    }
    return out;
}

std::vector<std::size_t> category_labels(const PersonCategory& p, const AttributeSchema& schema) {
    validate_category(p, schema);
    std::vector<std::size_t> labels(schema.group_count(), 0);
    for (std::size_t gi = 0; gi < schema.group_count(); ++gi) {
        const std::size_t off = schema.group_offset(gi);
        for (std::size_t k = 0; k < schema.group_size(gi); ++k)
            if (p.bits[off + k]) labels[gi] = k;
    }
    return labels;
}

Bits hamming_profile(const PersonCategory& a, const PersonCategory& b) {
    if (a.bits.size() != b.bits.size())
        throw DataError("hamming_profile: length mismatch " + std::to_string(a.bits.size()) +
                        " vs " + std::to_string(b.bits.size()));
    Bits h(a.bits.size());
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = a.bits[k] == b.bits[k] ? 0 : 1;
    return h;
}

CategoryQuery encode_query(const std::vector<std::pair<std::string, std::string>>& attrs,
                           const AttributeSchema& schema) {
    CategoryQuery q;
    q.bits.assign(schema.d_pc(), 0);
    q.specified.assign(schema.group_count(), false);
    for (const auto& [group, attr] : attrs) {
        const std::size_t gi = schema.group_index(group);
        if (gi == AttributeSchema::npos) throw DataError("query: unknown group '" + group + "'");
        if (q.specified[gi]) throw DataError("query: duplicate group '" + group + "'");
        const std::size_t ai = schema.attribute_index(gi, attr);
        if (ai == AttributeSchema::npos)
            throw DataError("query: unknown attribute '" + attr + "' in group '" + group + "'");
        q.specified[gi] = true;
        q.bits[schema.group_offset(gi) + ai] = 1;
    }
    return q;
}

CategoryQuery query_from_category(const PersonCategory& p, const AttributeSchema& schema) {
    validate_category(p, schema);
    CategoryQuery q;
    q.bits = p.bits;
    q.specified.assign(schema.group_count(), true);
    return q;
}

bool matches_on_specified(const CategoryQuery& q, const PersonCategory& p,
                          const AttributeSchema& schema) {
    for (std::size_t gi = 0; gi < schema.group_count(); ++gi) {
        if (!q.specified[gi]) continue;
        const std::size_t off = schema.group_offset(gi);
        for (std::size_t k = 0; k < schema.group_size(gi); ++k)
            if (q.bits[off + k] != p.bits[off + k]) return false;
    }
    return true;
}

std::string canonical_category_id(const PersonCategory& p, const AttributeSchema& schema) {
    std::string id;
    for (std::size_t gi = 0; gi < schema.group_count(); ++gi) {
        const std::size_t off = schema.group_offset(gi);
        if (gi) id += '|';
        bool found = false;
        for (std::size_t k = 0; k < schema.group_size(gi); ++k) {
            if (p.bits[off + k]) {
                id += schema.groups()[gi].attributes[k];
                found = true;
                break;
            }
        }
        if (!found) id += '?';
    }
    return id;
}

}  // namespace asmr
