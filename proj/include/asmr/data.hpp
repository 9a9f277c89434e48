#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asmr/linalg.hpp"
#include "asmr/schema.hpp"

namespace asmr {

enum class Split : std::uint8_t { Train, TestSeen, TestUnseen };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Sample {
    std::string id;
    Vec features;
    PersonCategory category;
    Split split = Split::Train;
};

struct Dataset {
    AttributeSchema schema;
    std::size_t feature_dim = 0;
    std::vector<Sample> samples;

    std::vector<std::size_t> indices(Split s) const;
    // unique categories among the given sample indices, sorted by category_id
    std::vector<PersonCategory> unique_categories(const std::vector<std::size_t>& idx) const;
    std::vector<PersonCategory> unique_categories(Split s) const;
    std::vector<PersonCategory> unique_categories() const;
};

struct SynthConfig {
    std::vector<std::size_t> group_sizes{3, 5, 4};
    std::size_t n_categories = 60;
    std::size_t images_per_category_min = 30;
    std::size_t images_per_category_max = 30;
    std::size_t feature_dim = 64;
    Vec saliency;  // per group; empty means 1.0 everywhere
    double noise_std = 0.5;
    double label_flip_rate = 0.0;
    double unseen_fraction = 0.3;
    double seen_test_fraction = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
};

// Linear generator: every image of category p is M p + noise, where M is a
// fixed seeded matrix whose columns are scaled by the owning group's saliency.
// Label flips reassign one group in the recorded category while the features
// keep following the true one.
Dataset generate(const SynthConfig& cfg);

// Category-level holdout: unseen categories' samples all go to test_unseen;
// each remaining sample goes to test_seen with probability seen_test_fraction,
// else to train.
void split_dataset(Dataset& ds, double unseen_fraction, double seen_test_fraction,
                   std::uint64_t seed);

// Throws DataError if a train category also appears in test_unseen.
void check_no_leakage(const Dataset& ds);

void save_dataset(const Dataset& ds, const std::filesystem::path& schema_path,
                  const std::filesystem::path& samples_path,
                  const std::filesystem::path& splits_path);

// splits_path may be empty: all samples land in Train. drop_singletons removes
// categories with a single sample (they are warned about either way).
Dataset load_dataset(const std::filesystem::path& schema_path,
                     const std::filesystem::path& samples_path,
                     const std::filesystem::path& splits_path = {},
                     bool drop_singletons = false);

}  // namespace asmr
