#include "fairpipe/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

using nlohmann::json;

const std::vector<std::vector<int>>& occupations_by_sector() {
    static const std::vector<std::vector<int>> table = [] {
        std::vector<std::vector<int>> t(kNumSectors);
        for (int occ = 0; occ < kNumOccupations; ++occ) t[sector_of_occupation(occ)].push_back(occ);
        return t;
    }();
    return table;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng, const char* slot) {
    if (pool.empty()) {
        throw LexiconError(std::string("lexicon has no tokens for slot '") + slot + "'");
    }
    return pool[rng.below(pool.size())];
}

// Distinct sample of k pool entries via partial Fisher-Yates.
std::vector<std::string> pick_distinct(const std::vector<std::string>& pool, std::size_t k,
                                       Rng& rng, const char* slot) {
    if (pool.size() < k) {
        throw LexiconError(std::string("lexicon pool for slot '") + slot + "' smaller than " +
                           std::to_string(k));
    }
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<std::string> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.push_back(pool[idx[i]]);
    }
    return out;
}

void require_token(const Lexicon& lex, const std::string& token, TokenTag tag, int gender,
                   const char* slot) {
    if (!lex.contains(token) || lex.entry(token).tag != tag ||
        (gender >= 0 && lex.entry(token).gender != gender)) {
        throw LexiconError(std::string("lexicon does not cover slot '") + slot + "' (token '" +
                           token + "')");
    }
}

}  // namespace

void TokenSequence::pad_to(std::size_t len) {
    while (tokens.size() < len) tokens.emplace_back(kPadToken);
}

SectorWeights default_sector_weights() {
    // Competency layout: education, availability, experience, recommendation,
    // and three language-proficiency features.
    return SectorWeights{{
        {0.30, 0.10, 0.20, 0.15, 0.10, 0.10, 0.05},  // education
        {0.25, 0.20, 0.25, 0.10, 0.08, 0.07, 0.05},  // healthcare
        {0.25, 0.05, 0.30, 0.20, 0.10, 0.05, 0.05},  // jurisdiction
        {0.20, 0.10, 0.35, 0.05, 0.10, 0.10, 0.10},  // technology
    }};
}

void GeneratorConfig::validate() const {
    if (n_profiles == 0 || n_profiles % 8 != 0) {
        throw ConfigError("n_profiles must be a positive multiple of 8 (gender x sector "
                          "balance), got " + std::to_string(n_profiles));
    }
    if (delta < 0.0 || delta > 1.0) {
        throw ConfigError("delta must lie in [0, 1], got " + std::to_string(delta));
    }
    if (proxy_rate < 0.0 || proxy_rate > 1.0) {
        throw ConfigError("proxy_rate must lie in [0, 1], got " + std::to_string(proxy_rate));
    }
    if (max_len < 40) {
        throw ConfigError("max_len must be at least 40 (template upper bound), got " +
                          std::to_string(max_len));
    }
    for (int s = 0; s < kNumSectors; ++s) {
        double sum = 0.0;
        for (const double w : sector_weights[s]) {
            if (w < 0.0) throw ConfigError("sector_weights must be non-negative");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ConfigError("sector_weights row " + std::to_string(s) +
                              " sums to " + std::to_string(sum) + ", expected 1");
        }
    }
}

double blind_score(std::span<const double> x, int sector, const SectorWeights& weights) {
    if (sector < 0 || sector >= kNumSectors) {
        throw IndexError("sector " + std::to_string(sector) + " out of range");
    }
    if (x.size() != kNumCompetencies) {
        throw ConfigError("competency vector must have " + std::to_string(kNumCompetencies) +
                          " entries");
    }
    double y = 0.0;
    for (std::size_t i = 0; i < kNumCompetencies; ++i) {
        if (x[i] < 0.0 || x[i] > 1.0) throw ConfigError("competencies must lie in [0, 1]");
        y += weights[sector][i] * x[i];
    }
    return y;
}

double biased_score(double y, int gender, double delta) {
    if (gender == 0) return y;
    return std::max(0.0, y - delta);
}

TokenSequence render_bio(const Profile& profile, const Lexicon& lexicon, Rng& rng,
                         double proxy_rate, std::size_t max_len) {
    const int g = profile.gender;
    const int sector = sector_of_occupation(profile.occupation);
    const std::string& occ_token = occupation_tokens()[profile.occupation];
    require_token(lexicon, occ_token, TokenTag::sector_content, -1, "occupation");
    require_token(lexicon, profile.name_token, TokenTag::name, g, "name");

    const std::string subj = g == 0 ? "he" : "she";
    const std::string poss = g == 0 ? "his" : "her";
    require_token(lexicon, subj, TokenTag::pronoun, g, "pronoun_subject");
    require_token(lexicon, poss, TokenTag::pronoun, g, "pronoun_possessive");

    // Field pool: sector content minus the occupation vocabulary.
    std::vector<std::string> fields = lexicon.tokens_with_tag(TokenTag::sector_content, -1, sector);
    const auto& occs = occupation_tokens();
    std::erase_if(fields, [&](const std::string& t) {
        return std::find(occs.begin(), occs.end(), t) != occs.end();
    });
    const auto verbs = lexicon.tokens_with_tag(TokenTag::verb);
    const auto adverbs = lexicon.tokens_with_tag(TokenTag::adverb);
    const auto neutrals = lexicon.tokens_with_tag(TokenTag::neutral);
    const auto proxies = lexicon.tokens_with_tag(TokenTag::gender_proxy, g);

    const std::string v1 = pick(verbs, rng, "verb");
    const std::string adv1 = pick(adverbs, rng, "adverb");
    const auto f = pick_distinct(fields, 4, rng, "sector_content");
    const std::string v2 = pick(verbs, rng, "verb");

    TokenSequence seq;
    auto& t = seq.tokens;
    t.insert(t.end(), {profile.name_token, "is", "a", occ_token, "who", v1, adv1, "in", f[0],
                       "and", f[1]});
    t.insert(t.end(), {subj, v2, "in", f[2], "with", "years", "of", f[3], "experience"});
    for (int slot = 0; slot < kProxySlotsPerBio; ++slot) {
        if (rng.uniform() < proxy_rate) {
            const std::string pv = pick(verbs, rng, "verb");
            const std::string proxy = pick(proxies, rng, "gender_proxy");
            t.insert(t.end(), {subj, pv, proxy});
        }
    }
    const std::string trait = pick(neutrals, rng, "neutral");
    const std::string quality = pick(neutrals, rng, "neutral");
    t.insert(t.end(), {poss, trait, "is", quality});

    if (t.size() > max_len) t.resize(max_len);
    seq.logical_len = t.size();
    return seq;
}

ProfileSet generate_profiles(const GeneratorConfig& config, const Lexicon& lexicon) {
    config.validate();
    const auto& by_sector = occupations_by_sector();
    const std::array<std::vector<std::string>, 2> names = {
        lexicon.tokens_with_tag(TokenTag::name, 0),
        lexicon.tokens_with_tag(TokenTag::name, 1),
    };
    ProfileSet out;
    out.reserve(config.n_profiles);
    for (std::size_t id = 0; id < config.n_profiles; ++id) {
        Rng rng(derive_seed(config.seed, "profile", id));
        Profile p;
        p.id = static_cast<std::int64_t>(id);
        const int stratum = static_cast<int>(id % 8);
        p.gender = stratum % 2;
        p.sector = stratum / 2;
        const auto& occs = by_sector[p.sector];
        p.occupation = occs[rng.below(occs.size())];
        for (auto& c : p.competencies) c = rng.uniform();
        p.name_token = pick(names[p.gender], rng, "name");
        p.blind_score = blind_score(p.competencies, p.sector, config.sector_weights);
        p.biased_score = biased_score(p.blind_score, p.gender, config.delta);
        p.bio = render_bio(p, lexicon, rng, config.proxy_rate, config.max_len);
        out.push_back(std::move(p));
    }
    return out;
}

std::pair<ProfileSet, ProfileSet> split(const ProfileSet& profiles, double val_fraction,
                                        std::uint64_t seed) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0) {
        throw ConfigError("val_fraction must lie in (0, 1), got " + std::to_string(val_fraction));
    }
    std::array<std::vector<std::size_t>, 8> strata;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const int stratum = profiles[i].gender + 2 * profiles[i].sector;
        strata[static_cast<std::size_t>(stratum)].push_back(i);
    }
    std::vector<std::size_t> val_idx;
    std::vector<std::size_t> train_idx;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto& members = strata[s];
        if (members.empty()) continue;
        const auto n_val = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(members.size())));
        if (n_val == 0 || n_val >= members.size()) {
            throw SplitError("stratum " + std::to_string(s) + " with " +
                             std::to_string(members.size()) + " profiles cannot be split at "
                             "fraction " + std::to_string(val_fraction));
        }
        Rng rng(derive_seed(seed, "split", s));
        rng.shuffle(members);
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < n_val ? val_idx : train_idx).push_back(members[i]);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    ProfileSet train;
    train.reserve(train_idx.size());
    ProfileSet val;
    val.reserve(val_idx.size());
    for (const auto i : train_idx) train.push_back(profiles[i]);
    for (const auto i : val_idx) val.push_back(profiles[i]);
    return {std::move(train), std::move(val)};
}

namespace {

json profile_to_json(const Profile& p) {
    json j;
    j["id"] = p.id;
    j["gender"] = p.gender;
    j["sector"] = p.sector;
    j["occupation"] = p.occupation;
    j["competencies"] = p.competencies;
    j["name_token"] = p.name_token;
    j["bio"] = {{"logical_len", p.bio.logical_len}, {"tokens", p.bio.tokens}};
    j["blind_score"] = p.blind_score;
    j["biased_score"] = p.biased_score;
    return j;
}

Profile profile_from_json(const json& j) {
    Profile p;
    p.id = j.at("id").get<std::int64_t>();
    p.gender = j.at("gender").get<int>();
    p.sector = j.at("sector").get<int>();
    p.occupation = j.at("occupation").get<int>();
    const auto comp = j.at("competencies").get<std::vector<double>>();
    if (comp.size() != kNumCompetencies) throw IoError("profile competencies have wrong length");
    std::copy(comp.begin(), comp.end(), p.competencies.begin());
    p.name_token = j.at("name_token").get<std::string>();
    p.bio.tokens = j.at("bio").at("tokens").get<std::vector<std::string>>();
    p.bio.logical_len = j.at("bio").at("logical_len").get<std::size_t>();
    p.blind_score = j.at("blind_score").get<double>();
    p.biased_score = j.at("biased_score").get<double>();
    return p;
}

}  // namespace

std::string profiles_to_jsonl(const ProfileSet& profiles) {
    std::ostringstream os;
    for (const auto& p : profiles) os << profile_to_json(p).dump() << "\n";
    return os.str();
}

ProfileSet profiles_from_jsonl(const std::string& text) {
    ProfileSet out;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(profile_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw IoError("profile JSONL line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_profiles_jsonl(const ProfileSet& profiles, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write profile file '" + path + "'");
    out << profiles_to_jsonl(profiles);
}

ProfileSet load_profiles_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open profile file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return profiles_from_jsonl(text);
}

std::string generator_config_to_json(const GeneratorConfig& config) {
    json j;
    j["n_profiles"] = config.n_profiles;
    j["delta"] = config.delta;
    j["proxy_rate"] = config.proxy_rate;
    j["sector_weights"] = config.sector_weights;
    j["max_len"] = config.max_len;
    j["seed"] = config.seed;
    return j.dump(2) + "\n";
}

GeneratorConfig generator_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("generator config parse error: ") + e.what());
    }
    GeneratorConfig c;
    c.n_profiles = j.at("n_profiles").get<std::size_t>();
    c.delta = j.at("delta").get<double>();
    c.proxy_rate = j.at("proxy_rate").get<double>();
    const auto w = j.at("sector_weights").get<std::vector<std::vector<double>>>();
    if (w.size() != kNumSectors) throw ConfigError("sector_weights must have 4 rows");
    for (int s = 0; s < kNumSectors; ++s) {
        if (w[s].size() != kNumCompetencies) {
            throw ConfigError("sector_weights rows must have 7 entries");
        }
        std::copy(w[s].begin(), w[s].end(), c.sector_weights[s].begin());
    }
    c.max_len = j.at("max_len").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace fairpipe
