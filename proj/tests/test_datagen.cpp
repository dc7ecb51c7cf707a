#include <doctest.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "fairpipe/datagen.hpp"
#include "fairpipe/errors.hpp"

using namespace fairpipe;

namespace {

GeneratorConfig small_config(std::size_t n, std::uint64_t seed = 1) {
    GeneratorConfig c;
    c.n_profiles = n;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("generate_profiles balances gender and sector exactly") {
    const auto lex = Lexicon::builtin();
    GeneratorConfig cfg = small_config(24000, 7);
    const auto profiles = generate_profiles(cfg, lex);
    REQUIRE(profiles.size() == 24000);
    std::array<int, 2> by_gender{0, 0};
    std::array<std::array<int, 2>, kNumSectors> by_sector_gender{};
    for (const auto& p : profiles) {
        by_gender[static_cast<std::size_t>(p.gender)] += 1;
        by_sector_gender[static_cast<std::size_t>(p.sector)]
                        [static_cast<std::size_t>(p.gender)] += 1;
        CHECK(p.sector == sector_of_occupation(p.occupation));
        CHECK(p.biased_score <= p.blind_score);
        if (p.gender == 0) CHECK(p.biased_score == p.blind_score);
    }
    CHECK(by_gender[0] == 12000);
    CHECK(by_gender[1] == 12000);
    for (int s = 0; s < kNumSectors; ++s) {
        CHECK(by_sector_gender[static_cast<std::size_t>(s)][0] ==
              by_sector_gender[static_cast<std::size_t>(s)][1]);
    }
}

TEST_CASE("generation is deterministic byte for byte") {
    const auto lex = Lexicon::builtin();
    const GeneratorConfig cfg = small_config(8, 1);
    const auto a = profiles_to_jsonl(generate_profiles(cfg, lex));
    const auto b = profiles_to_jsonl(generate_profiles(cfg, lex));
    CHECK(a == b);
    GeneratorConfig other = cfg;
    other.seed = 2;
    CHECK(a != profiles_to_jsonl(generate_profiles(other, lex)));
}

TEST_CASE("competencies are uniform and independent of gender") {
    const auto lex = Lexicon::builtin();
    const auto profiles = generate_profiles(small_config(800, 3), lex);
    for (int g = 0; g < 2; ++g) {
        for (std::size_t c = 0; c < kNumCompetencies; ++c) {
            double sum = 0.0;
            int n = 0;
            for (const auto& p : profiles) {
                if (p.gender != g) continue;
                sum += p.competencies[c];
                ++n;
            }
            CHECK(std::abs(sum / n - 0.5) < 0.05);
        }
    }
}

TEST_CASE("config validation rejects bad inputs") {
    const auto lex = Lexicon::builtin();
    GeneratorConfig cfg = small_config(10);  // not divisible by 8
    CHECK_THROWS_AS(generate_profiles(cfg, lex), ConfigError);
    cfg = small_config(16);
    cfg.sector_weights[2][0] += 0.5;  // row no longer sums to 1
    CHECK_THROWS_AS(generate_profiles(cfg, lex), ConfigError);
    cfg = small_config(16);
    cfg.delta = 1.5;
    CHECK_THROWS_AS(generate_profiles(cfg, lex), ConfigError);
    cfg = small_config(16);
    cfg.max_len = 10;
    CHECK_THROWS_AS(generate_profiles(cfg, lex), ConfigError);
}

TEST_CASE("blind_score spot values") {
    const auto w = default_sector_weights();
    const std::vector<double> ones(kNumCompetencies, 1.0);
    const std::vector<double> zeros(kNumCompetencies, 0.0);
    for (int s = 0; s < kNumSectors; ++s) {
        CHECK(blind_score(ones, s, w) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(blind_score(zeros, s, w) == 0.0);
    }
    SectorWeights selector{};
    selector[0] = {1, 0, 0, 0, 0, 0, 0};
    const std::vector<double> x = {0.3, 0.9, 0.1, 0.5, 0.2, 0.8, 0.4};
    CHECK(blind_score(x, 0, selector) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK_THROWS_AS(blind_score(x, 4, w), IndexError);
    CHECK_THROWS_AS(blind_score(x, -1, w), IndexError);
}

TEST_CASE("biased_score arithmetic") {
    CHECK(biased_score(0.5, 1, 0.0) == 0.5);
    CHECK(biased_score(0.5, 1, 0.2) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(biased_score(0.1, 1, 0.2) == 0.0);
    CHECK(biased_score(0.5, 0, 0.9) == 0.5);
}

TEST_CASE("render_bio proxy-rate edge cases") {
    const auto lex = Lexicon::builtin();
    Profile p;
    p.gender = 1;
    p.occupation = 0;
    p.sector = 0;
    p.name_token = "mary";

    Rng rng(11);
    const auto none = render_bio(p, lex, rng, 0.0, 48);
    int proxies = 0;
    int pronouns = 0;
    for (const auto& t : none.tokens) {
        const auto& e = lex.entry(t);
        if (e.tag == TokenTag::gender_proxy) ++proxies;
        if (e.tag == TokenTag::pronoun) ++pronouns;
    }
    CHECK(proxies == 0);
    CHECK(pronouns > 0);  // names and pronouns stay gendered

    Rng rng2(12);
    const auto all = render_bio(p, lex, rng2, 1.0, 48);
    int matching = 0;
    for (const auto& t : all.tokens) {
        const auto& e = lex.entry(t);
        if (e.tag == TokenTag::gender_proxy) {
            CHECK(e.gender == 1);
            ++matching;
        }
    }
    CHECK(matching == kProxySlotsPerBio);
}

TEST_CASE("proxy slot fill rate matches the binomial expectation") {
    const auto lex = Lexicon::builtin();
    const double rate = 0.9;
    const int n = 1000;
    int with_proxy = 0;
    for (int i = 0; i < n; ++i) {
        Profile p;
        p.gender = i % 2;
        p.occupation = (i / 2) % kNumOccupations;
        p.sector = sector_of_occupation(p.occupation);
        p.name_token = p.gender == 0 ? "james" : "mary";
        Rng rng(derive_seed(99, "bio", static_cast<std::uint64_t>(i)));
        const auto bio = render_bio(p, lex, rng, rate, 48);
        for (const auto& t : bio.tokens) {
            if (lex.entry(t).tag == TokenTag::gender_proxy) {
                ++with_proxy;
                break;
            }
        }
    }
    // P(at least one of 3 slots) = 1 - 0.1^3 = 0.999.
    const double expected = 1.0 - std::pow(1.0 - rate, kProxySlotsPerBio);
    const double sigma = std::sqrt(expected * (1.0 - expected) / n);
    CHECK(std::abs(static_cast<double>(with_proxy) / n - expected) <= 3.0 * sigma);
}

TEST_CASE("every rendered token is covered by the lexicon and lowercase") {
    const auto lex = Lexicon::builtin();
    const auto profiles = generate_profiles(small_config(64, 5), lex);
    for (const auto& p : profiles) {
        CHECK(p.bio.logical_len == p.bio.tokens.size());
        CHECK(p.bio.tokens.size() <= 48);
        for (const auto& t : p.bio.tokens) {
            CHECK(lex.contains(t));
            for (const char c : t) {
                CHECK(!std::isupper(static_cast<unsigned char>(c)));
            }
        }
    }
}

TEST_CASE("render_bio reports missing lexicon coverage") {
    Lexicon empty;
    Profile p;
    p.gender = 0;
    p.occupation = 0;
    p.name_token = "james";
    Rng rng(1);
    CHECK_THROWS_AS(render_bio(p, empty, rng, 0.5, 48), LexiconError);
}

TEST_CASE("split arithmetic, stratification, and determinism") {
    const auto lex = Lexicon::builtin();
    const auto profiles = generate_profiles(small_config(24000, 7), lex);
    const auto [train, val] = split(profiles, 0.2, 42);
    CHECK(train.size() == 19200);
    CHECK(val.size() == 4800);

    int val_f = 0;
    for (const auto& p : val) val_f += p.gender;
    CHECK(val_f == 2400);  // balanced input stays balanced

    std::set<std::int64_t> train_ids;
    for (const auto& p : train) train_ids.insert(p.id);
    for (const auto& p : val) CHECK(train_ids.count(p.id) == 0);
    CHECK(train_ids.size() + val.size() == profiles.size());

    const auto [train2, val2] = split(profiles, 0.2, 42);
    REQUIRE(val2.size() == val.size());
    for (std::size_t i = 0; i < val.size(); ++i) CHECK(val2[i].id == val[i].id);
}

TEST_CASE("split rejects unusable strata and fractions") {
    const auto lex = Lexicon::builtin();
    const auto tiny = generate_profiles(small_config(8, 1), lex);
    CHECK_THROWS_AS(split(tiny, 0.01, 1), SplitError);  // rounds to zero per stratum
    CHECK_THROWS_AS(split(tiny, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split(tiny, 1.0, 1), ConfigError);
}

TEST_CASE("profile JSONL round-trip is byte-stable") {
    const auto lex = Lexicon::builtin();
    const auto profiles = generate_profiles(small_config(16, 9), lex);
    const auto text = profiles_to_jsonl(profiles);
    const auto back = profiles_from_jsonl(text);
    CHECK(profiles_to_jsonl(back) == text);
}

TEST_CASE("mean biased-score gap tracks delta") {
    const auto lex = Lexicon::builtin();
    for (const double delta : {0.1, 0.3, 0.5}) {
        GeneratorConfig cfg = small_config(24000, 13);
        cfg.delta = delta;
        const auto profiles = generate_profiles(cfg, lex);
        double mean[2] = {0.0, 0.0};
        int n[2] = {0, 0};
        for (const auto& p : profiles) {
            mean[p.gender] += p.biased_score;
            n[p.gender] += 1;
        }
        const double gap = mean[0] / n[0] - mean[1] / n[1];
        CHECK(std::abs(gap - delta) < 0.02);
    }
}

TEST_CASE("blind scores balance across genders at scale") {
    const auto lex = Lexicon::builtin();
    const auto profiles = generate_profiles(small_config(24000, 21), lex);
    double mean[2] = {0.0, 0.0};
    int n[2] = {0, 0};
    for (const auto& p : profiles) {
        mean[p.gender] += p.blind_score;
        n[p.gender] += 1;
    }
    CHECK(std::abs(mean[0] / n[0] - mean[1] / n[1]) < 0.02);
}

TEST_CASE("lexicon shape matches the renderer's needs") {
    const auto lex = Lexicon::builtin();
    CHECK(lex.size() >= 350);
    for (int g = 0; g < 2; ++g) {
        CHECK(lex.tokens_with_tag(TokenTag::gender_proxy, g).size() >= 10);
        CHECK(lex.tokens_with_tag(TokenTag::name, g).size() >= 40);
        CHECK(lex.tokens_with_tag(TokenTag::pronoun, g).size() >= 2);
    }
    for (int s = 0; s < kNumSectors; ++s) {
        CHECK(lex.tokens_with_tag(TokenTag::sector_content, -1, s).size() >= 10);
    }
    const auto roundtrip = Lexicon::from_json_string(lex.to_json_string());
    CHECK(roundtrip.to_json_string() == lex.to_json_string());
    CHECK(roundtrip.size() == lex.size());
}
