#pragma once

#include <map>
#include <string>
#include <vector>

namespace fairpipe {

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr int kNumSectors = 4;
inline constexpr int kNumOccupations = 10;

enum class TokenTag {
    sector_content,
    gender_proxy,
    name,
    pronoun,
    stopword,
    verb,
    adverb,
    neutral,
};

std::string to_string(TokenTag tag);
TokenTag token_tag_from_string(const std::string& s);

struct LexiconEntry {
    TokenTag tag = TokenTag::neutral;
    int gender = -1;  // 0/1 for gender-tagged entries, -1 otherwise
    int sector = -1;  // 0..3 for sector-affine entries, -1 otherwise
};

// Token vocabulary for the bio renderer. Every token a rendered bio can
// contain has an entry here; part-of-speech style tags are stored, not
// inferred, because bios are template-generated.
class Lexicon {
public:
    static Lexicon builtin();
    static Lexicon load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_json_string() const;
    static Lexicon from_json_string(const std::string& text);

    void add(const std::string& token, LexiconEntry entry);

    bool contains(const std::string& token) const { return entries_.count(token) != 0; }
    const LexiconEntry& entry(const std::string& token) const;
    std::size_t size() const { return entries_.size(); }
    int version() const { return version_; }

    // Sorted token lists by role; gender/sector filter where >= 0.
    std::vector<std::string> tokens_with_tag(TokenTag tag, int gender = -1,
                                             int sector = -1) const;

    const std::map<std::string, LexiconEntry>& entries() const { return entries_; }

private:
    std::map<std::string, LexiconEntry> entries_;
    int version_ = 1;
};

// Fixed occupation vocabulary; index = occupation id.
const std::vector<std::string>& occupation_tokens();

// Fixed 10 -> 4 occupation-to-sector map.
int sector_of_occupation(int occupation);

}  // namespace fairpipe
