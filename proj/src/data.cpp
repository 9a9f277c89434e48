#include "asmr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "asmr/errors.hpp"
#include "asmr/rng.hpp"

namespace asmr {

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::TestSeen: return "test_seen";
        case Split::TestUnseen: return "test_unseen";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test_seen") return Split::TestSeen;
    if (s == "test_unseen") return Split::TestUnseen;
    throw DataError("unknown split tag '" + s + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == s) out.push_back(i);
    return out;
}

std::vector<PersonCategory> Dataset::unique_categories(const std::vector<std::size_t>& idx) const {
    std::map<std::string, const PersonCategory*> by_id;
    for (std::size_t i : idx) by_id.emplace(samples[i].category.category_id, &samples[i].category);
    std::vector<PersonCategory> out;
    out.reserve(by_id.size());
    for (const auto& [id, cat] : by_id) out.push_back(*cat);
    return out;
}

std::vector<PersonCategory> Dataset::unique_categories(Split s) const {
    return unique_categories(indices(s));
}

std::vector<PersonCategory> Dataset::unique_categories() const {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return unique_categories(all);
}

void SynthConfig::validate() const {
    if (group_sizes.size() < 1) throw ConfigError("synth: need at least one group");
    for (std::size_t s : group_sizes)
        if (s < 2) throw ConfigError("synth: every group needs at least 2 attributes");
    double product = 1.0;
    for (std::size_t s : group_sizes) product *= static_cast<double>(s);
    if (static_cast<double>(n_categories) > product)
        throw ConfigError("synth: " + std::to_string(n_categories) +
                          " categories exceed the " + std::to_string(static_cast<long long>(product)) +
                          " possible attribute combinations");
    if (n_categories < 1) throw ConfigError("synth: need at least one category");
    if (images_per_category_min < 2)
        throw ConfigError("synth: images_per_category must be >= 2 (singleton categories are outliers)");
    if (images_per_category_max < images_per_category_min)
        throw ConfigError("synth: images_per_category range is inverted");
    if (feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
    if (noise_std < 0.0) throw ConfigError("synth: noise_std must be >= 0");
    if (label_flip_rate < 0.0 || label_flip_rate >= 1.0)
        throw ConfigError("synth: label_flip_rate must lie in [0,1)");
    if (unseen_fraction < 0.0 || unseen_fraction > 1.0)
        throw ConfigError("synth: unseen_fraction must lie in [0,1]");
    if (seen_test_fraction < 0.0 || seen_test_fraction >= 1.0)
        throw ConfigError("synth: seen_test_fraction must lie in [0,1)");
    if (!saliency.empty() && saliency.size() != group_sizes.size())
        throw ConfigError("synth: saliency needs one entry per group");
    for (double s : saliency)
        if (!(s > 0.0)) throw ConfigError("synth: saliency entries must be > 0");
}

namespace {

AttributeSchema synth_schema(const std::vector<std::size_t>& group_sizes) {
    std::vector<AttributeGroup> groups;
    for (std::size_t g = 0; g < group_sizes.size(); ++g) {
        AttributeGroup grp;
        grp.name = "g" + std::to_string(g);
        for (std::size_t a = 0; a < group_sizes[g]; ++a)
            grp.attributes.push_back(grp.name + "_a" + std::to_string(a));
        groups.push_back(std::move(grp));
    }
    return AttributeSchema(std::move(groups));
}

PersonCategory category_from_combo(const std::vector<std::size_t>& combo,
                                   const AttributeSchema& schema) {
    PersonCategory p;
    p.bits.assign(schema.d_pc(), 0);
    for (std::size_t g = 0; g < combo.size(); ++g)
        p.bits[schema.group_offset(g) + combo[g]] = 1;
    p.category_id = canonical_category_id(p, schema);
    return p;
}

std::vector<std::vector<std::size_t>> sample_distinct_combos(const SynthConfig& cfg, Rng& rng) {
    double product = 1.0;
    for (std::size_t s : cfg.group_sizes) product *= static_cast<double>(s);
    std::vector<std::vector<std::size_t>> combos;
    if (product <= (1 << 20)) {
        // enumerate, shuffle, take a prefix
        std::vector<std::vector<std::size_t>> all;
        std::vector<std::size_t> cur(cfg.group_sizes.size(), 0);
        for (;;) {
            all.push_back(cur);
            std::size_t g = cfg.group_sizes.size();
            while (g-- > 0) {
                if (++cur[g] < cfg.group_sizes[g]) break;
                cur[g] = 0;
                if (g == 0) goto done;
            }
        }
    done:
        rng.shuffle(all);
        combos.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.n_categories));
    } else {
        std::set<std::vector<std::size_t>> seen;
        while (seen.size() < cfg.n_categories) {
            std::vector<std::size_t> combo(cfg.group_sizes.size());
            for (std::size_t g = 0; g < combo.size(); ++g) combo[g] = rng.below(cfg.group_sizes[g]);
            seen.insert(combo);
        }
        combos.assign(seen.begin(), seen.end());
    }
    return combos;
}

std::string zero_pad(std::size_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

Dataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.schema = synth_schema(cfg.group_sizes);
    ds.feature_dim = cfg.feature_dim;

    Rng matrix_rng(derive_seed(cfg.seed, 0x51));
    Rng category_rng(derive_seed(cfg.seed, 0x52));
    Rng count_rng(derive_seed(cfg.seed, 0x53));
    Rng noise_rng(derive_seed(cfg.seed, 0x54));
    Rng flip_rng(derive_seed(cfg.seed, 0x55));

    // column k of M belongs to the attribute owning bit k
    Matrix M(cfg.feature_dim, ds.schema.d_pc());
    for (double& v : M.data) v = matrix_rng.normal();
    if (!cfg.saliency.empty()) {
        for (std::size_t g = 0; g < ds.schema.group_count(); ++g) {
            const std::size_t off = ds.schema.group_offset(g);
            for (std::size_t k = 0; k < ds.schema.group_size(g); ++k)
                for (std::size_t r = 0; r < M.rows; ++r) M(r, off + k) *= cfg.saliency[g];
        }
    }

    const auto combos = sample_distinct_combos(cfg, category_rng);
    for (std::size_t c = 0; c < combos.size(); ++c) {
        const PersonCategory true_cat = category_from_combo(combos[c], ds.schema);
        std::size_t count = cfg.images_per_category_min;
        if (cfg.images_per_category_max > cfg.images_per_category_min)
            count += count_rng.below(cfg.images_per_category_max - cfg.images_per_category_min + 1);
        for (std::size_t j = 0; j < count; ++j) {
            Sample s;
            s.id = "c" + zero_pad(c, 4) + "_i" + zero_pad(j, 4);
            s.features.assign(cfg.feature_dim, 0.0);
            for (std::size_t r = 0; r < cfg.feature_dim; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < ds.schema.d_pc(); ++k)
                    if (true_cat.bits[k]) acc += M(r, k);
                s.features[r] = acc + cfg.noise_std * noise_rng.normal();
            }
            s.category = true_cat;
            if (cfg.label_flip_rate > 0.0 && flip_rng.uniform() < cfg.label_flip_rate) {
                std::vector<std::size_t> combo = combos[c];
                const std::size_t g = flip_rng.below(combo.size());
                const std::size_t shift = 1 + flip_rng.below(cfg.group_sizes[g] - 1);
                combo[g] = (combo[g] + shift) % cfg.group_sizes[g];
                s.category = category_from_combo(combo, ds.schema);
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

void split_dataset(Dataset& ds, double unseen_fraction, double seen_test_fraction,
                   std::uint64_t seed) {
    if (unseen_fraction < 0.0 || unseen_fraction > 1.0)
        throw ConfigError("split: unseen_fraction must lie in [0,1]");
    if (seen_test_fraction < 0.0 || seen_test_fraction >= 1.0)
        throw ConfigError("split: seen_test_fraction must lie in [0,1)");

    std::vector<PersonCategory> cats = ds.unique_categories();
    const std::size_t n_unseen =
        static_cast<std::size_t>(std::llround(unseen_fraction * static_cast<double>(cats.size())));
    if (n_unseen > cats.size()) throw ConfigError("split: infeasible unseen_fraction");

    Rng holdout_rng(derive_seed(seed, 0x61));
    holdout_rng.shuffle(cats);
    std::set<std::string> unseen_ids;
    for (std::size_t i = 0; i < n_unseen; ++i) unseen_ids.insert(cats[i].category_id);

    Rng sample_rng(derive_seed(seed, 0x62));
    for (auto& s : ds.samples) {
        if (unseen_ids.count(s.category.category_id)) {
            s.split = Split::TestUnseen;
        } else {
            s.split = sample_rng.uniform() < seen_test_fraction ? Split::TestSeen : Split::Train;
        }
    }
    check_no_leakage(ds);
}

void check_no_leakage(const Dataset& ds) {
    std::set<std::string> train_ids;
    for (const auto& s : ds.samples)
        if (s.split == Split::Train) train_ids.insert(s.category.category_id);
    for (const auto& s : ds.samples)
        if (s.split == Split::TestUnseen && train_ids.count(s.category.category_id))
            throw DataError("split leakage: category '" + s.category.category_id +
                            "' appears in both train and test_unseen");
}

void save_dataset(const Dataset& ds, const std::filesystem::path& schema_path,
                  const std::filesystem::path& samples_path,
                  const std::filesystem::path& splits_path) {
    {
        std::ofstream out(schema_path);
        if (!out) throw DataError("cannot write " + schema_path.string());
        out << ds.schema.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(samples_path);
        if (!out) throw DataError("cannot write " + samples_path.string());
        for (const auto& s : ds.samples) {
            nlohmann::json j{{"id", s.id},
                             {"attributes", decode_category(s.category, ds.schema)},
                             {"features", s.features}};
            out << j.dump() << "\n";
        }
    }
    {
        nlohmann::json splits{{"train", nlohmann::json::array()},
                              {"test_seen", nlohmann::json::array()},
                              {"test_unseen", nlohmann::json::array()}};
        for (const auto& s : ds.samples) splits[to_string(s.split)].push_back(s.id);
        std::ofstream out(splits_path);
        if (!out) throw DataError("cannot write " + splits_path.string());
        out << splits.dump(2) << "\n";
    }
}

Dataset load_dataset(const std::filesystem::path& schema_path,
                     const std::filesystem::path& samples_path,
                     const std::filesystem::path& splits_path, bool drop_singletons) {
    Dataset ds;
    ds.schema = AttributeSchema::load(schema_path);

    std::ifstream in(samples_path);
    if (!in) throw DataError("cannot open " + samples_path.string());
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = samples_path.string() + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
        Sample s;
        try {
            s.id = j.at("id").get<std::string>();
            std::map<std::string, std::string> attrs =
                j.at("attributes").get<std::map<std::string, std::string>>();
            s.category = encode_category(attrs, ds.schema);
            s.features = j.at("features").get<Vec>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(where + ": sample '" + j.value("id", "?") + "': " + e.what());
        }
        if (!ids.insert(s.id).second) throw DataError(where + ": duplicate sample id '" + s.id + "'");
        if (ds.samples.empty() && ds.feature_dim == 0) ds.feature_dim = s.features.size();
        if (s.features.size() != ds.feature_dim)
            throw DataError(where + ": feature vector has " + std::to_string(s.features.size()) +
                            " entries, expected " + std::to_string(ds.feature_dim));
        if (!all_finite(s.features)) throw DataError(where + ": non-finite feature value");
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw DataError(samples_path.string() + ": no samples");

    if (!splits_path.empty()) {
        std::ifstream sin(splits_path);
        if (!sin) throw DataError("cannot open " + splits_path.string());
        nlohmann::json j;
        try {
            sin >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(splits_path.string() + ": " + e.what());
        }
        std::map<std::string, Split> tag;
        for (const char* name : {"train", "test_seen", "test_unseen"}) {
            if (!j.contains(name)) continue;
            for (const auto& idj : j[name]) {
                const std::string id = idj.get<std::string>();
                if (!tag.emplace(id, split_from_string(name)).second)
                    throw DataError(splits_path.string() + ": sample '" + id +
                                    "' listed in two splits");
            }
        }
        for (auto& s : ds.samples) {
            auto it = tag.find(s.id);
            if (it == tag.end())
                throw DataError(splits_path.string() + ": sample '" + s.id + "' has no split tag");
            s.split = it->second;
            tag.erase(it);
        }
        if (!tag.empty())
            throw DataError(splits_path.string() + ": split tag for unknown sample '" +
                            tag.begin()->first + "'");
        check_no_leakage(ds);
    }

    // categories with one sample are outliers
    std::map<std::string, std::size_t> counts;
    for (const auto& s : ds.samples) counts[s.category.category_id]++;
    std::size_t singletons = 0;
    for (const auto& [id, c] : counts)
        if (c == 1) ++singletons;
    if (singletons > 0) {
        std::cerr << "warning: " << singletons << " categor" << (singletons == 1 ? "y has" : "ies have")
                  << " a single sample" << (drop_singletons ? " (dropped)" : "") << "\n";
        if (drop_singletons) {
            std::vector<Sample> kept;
            for (auto& s : ds.samples)
                if (counts[s.category.category_id] > 1) kept.push_back(std::move(s));
            ds.samples = std::move(kept);
            if (ds.samples.empty()) throw DataError("all samples were singleton categories");
        }
    }
    return ds;
}

}  // namespace asmr
