#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairpipe/lexicon.hpp"
#include "fairpipe/rng.hpp"

namespace fairpipe {

inline constexpr std::size_t kNumCompetencies = 7;
inline constexpr int kProxySlotsPerBio = 3;

// Ordered lowercase tokens. tokens[0..logical_len) are content; any
// trailing entries are "[PAD]".
struct TokenSequence {
    std::vector<std::string> tokens;
    std::size_t logical_len = 0;

    std::size_t padded_len() const { return tokens.size(); }
    void pad_to(std::size_t len);
};

struct Profile {
    std::int64_t id = 0;
    int gender = 0;  // 0 = male, 1 = female
    int sector = 0;
    int occupation = 0;
    std::array<double, kNumCompetencies> competencies{};
    std::string name_token;
    TokenSequence bio;
    double blind_score = 0.0;
    double biased_score = 0.0;
};

using ProfileSet = std::vector<Profile>;

using SectorWeights = std::array<std::array<double, kNumCompetencies>, kNumSectors>;

SectorWeights default_sector_weights();

struct GeneratorConfig {
    std::size_t n_profiles = 24000;
    double delta = 0.2;
    double proxy_rate = 0.9;
    SectorWeights sector_weights = default_sector_weights();
    std::size_t max_len = 48;  // renderer emits at most 40 tokens
    std::uint64_t seed = 7;

    void validate() const;  // throws ConfigError
};

// Weighted linear combination of the competencies for the given sector.
double blind_score(std::span<const double> x, int sector, const SectorWeights& weights);

// Subtractive penalty on gender 1, clamped at zero.
double biased_score(double y, int gender, double delta);

// Renders a templated bio for the profile's occupation/gender: occupation
// and sector content, stopword/verb/adverb glue, the gendered name and
// pronouns, and up to kProxySlotsPerBio gender-proxy tokens, each filled
// independently with probability proxy_rate.
TokenSequence render_bio(const Profile& profile, const Lexicon& lexicon, Rng& rng,
                         double proxy_rate, std::size_t max_len);

// Gender x sector balanced profile set; every field reproducible from
// (config, seed, id).
ProfileSet generate_profiles(const GeneratorConfig& config, const Lexicon& lexicon);

// Stratified (gender x sector) deterministic split.
std::pair<ProfileSet, ProfileSet> split(const ProfileSet& profiles, double val_fraction,
                                        std::uint64_t seed);

// JSON-lines serialization, one profile per line; byte-stable.
std::string profiles_to_jsonl(const ProfileSet& profiles);
ProfileSet profiles_from_jsonl(const std::string& text);
void save_profiles_jsonl(const ProfileSet& profiles, const std::string& path);
ProfileSet load_profiles_jsonl(const std::string& path);

std::string generator_config_to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const std::string& text);

}  // namespace fairpipe
