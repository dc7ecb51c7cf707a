#include "fairpipe/lexicon.hpp"

#include <fstream>
#include <json.hpp>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

using nlohmann::json;

const std::vector<std::string> kOccupations = {
    "teacher", "professor", "tutor",      // education
    "nurse",   "physician", "dentist",    // healthcare
    "attorney", "paralegal",              // jurisdiction
    "developer", "engineer",              // technology
};

constexpr int kOccupationSector[kNumOccupations] = {0, 0, 0, 1, 1, 1, 2, 2, 3, 3};

const std::vector<std::string> kContent[kNumSectors] = {
    {"curriculum", "classroom", "pedagogy", "literacy", "assessment", "tutoring", "education",
     "teaching", "students", "schools"},
    {"clinical", "patients", "medicine", "nursing", "diagnosis", "treatment", "surgery",
     "pharmacology", "anatomy", "hospitals"},
    {"litigation", "contracts", "courtroom", "legal", "compliance", "statutes", "trials",
     "evidence", "justice", "regulation"},
    {"software", "programming", "systems", "data", "networks", "security", "databases",
     "computing", "cloud", "infrastructure"},
};

const std::vector<std::string> kMaleProxies = {
    "technology", "engineering", "economics", "football",    "hardware",
    "startups",   "finance",     "gaming",    "competition", "mechanics",
};

const std::vector<std::string> kFemaleProxies = {
    "children",  "family",       "husband", "psychology", "health",
    "caregiving", "volunteering", "community", "empathy",  "nurturing",
};

const std::vector<std::string> kMalePronouns = {"he", "his", "him"};
const std::vector<std::string> kFemalePronouns = {"she", "her", "hers"};

const std::vector<std::string> kStopwords = {
    "a",   "an",  "and", "as",   "at",    "by",   "for",        "from", "has",
    "in",  "is",  "it",  "of",   "on",    "the",  "this",       "to",   "with",
    "who", "years", "experience", "work", "career", "their",    "over",
};

const std::vector<std::string> kVerbs = {
    "works",   "specializes", "focuses", "leads",  "manages", "supports",
    "mentors", "enjoys",      "values",  "pursues", "studies", "practices",
};

const std::vector<std::string> kAdverbs = {
    "diligently",    "effectively", "carefully",  "reliably", "consistently", "independently",
    "thoroughly",    "efficiently", "regularly",  "actively", "closely",      "broadly",
};

const std::vector<std::string> kNeutral = {
    "record",      "approach",     "background", "outlook",    "expertise", "portfolio",
    "respected",   "accomplished", "versatile",  "pragmatic",  "meticulous", "strategic",
};

const std::vector<std::string> kMaleNames = {
    "james",   "robert",  "john",    "michael", "david",   "william", "richard", "joseph",
    "thomas",  "carl",    "mark",    "donald",  "steven",  "andrew",  "paul",    "joshua",
    "kenneth", "kevin",   "brian",   "george",  "timothy", "ronald",  "jason",   "edward",
    "jeffrey", "ryan",    "jacob",   "gary",    "nicholas", "eric",   "jonathan", "stephen",
    "larry",   "justin",  "scott",   "brandon", "benjamin", "samuel", "gregory", "alexander",
    "patrick", "frank",   "raymond", "jack",    "dennis",  "jerry",   "tyler",   "aaron",
    "jose",    "adam",    "nathan",  "henry",   "zachary", "douglas", "peter",   "kyle",
    "noah",    "ethan",   "jeremy",  "walter",  "christian", "keith", "roger",   "terry",
    "austin",  "sean",    "gerald",  "carlos",  "harold",  "jordan",  "jesse",   "bryan",
    "lawrence", "arthur", "gabriel", "bruce",   "logan",   "billy",   "albert",  "willie",
    "alan",    "juan",    "wayne",   "elijah",  "randy",   "roy",     "vincent", "ralph",
    "eugene",  "russell", "bobby",   "mason",   "philip",  "louis",   "luis",    "victor",
    "martin",  "lucas",   "oscar",   "leonard", "dale",    "glenn",   "stanley", "manuel",
    "rodney",  "curtis",  "norman",  "marvin",  "theodore", "calvin", "edwin",   "leon",
    "miguel",  "tommy",   "claude",  "felix",   "dustin",  "marcus",  "hector",  "ivan",
};

const std::vector<std::string> kFemaleNames = {
    "mary",     "patricia", "jennifer", "linda",    "elizabeth", "barbara", "susan",   "jessica",
    "sarah",    "karen",    "lisa",     "nancy",    "betty",     "margaret", "sandra", "ashley",
    "kimberly", "emily",    "donna",    "michelle", "carol",     "amanda",  "dorothy", "melissa",
    "deborah",  "stephanie", "rebecca", "sharon",   "laura",     "cynthia", "kathleen", "amy",
    "angela",   "shirley",  "anna",     "brenda",   "pamela",    "emma",    "nicole",  "helen",
    "samantha", "katherine", "christine", "debra",  "rachel",    "carolyn", "janet",   "catherine",
    "maria",    "heather",  "diane",    "ruth",     "julie",     "olivia",  "joyce",   "virginia",
    "victoria", "kelly",    "lauren",   "christina", "joan",     "evelyn",  "judith",  "megan",
    "andrea",   "cheryl",   "hannah",   "jacqueline", "martha",  "gloria",  "teresa",  "ann",
    "sara",     "madison",  "frances",  "kathryn",  "janice",    "jean",    "abigail", "alice",
    "julia",    "judy",     "sophia",   "grace",    "denise",    "amber",   "doris",   "marilyn",
    "danielle", "beverly",  "isabella", "theresa",  "diana",     "natalie", "brittany", "charlotte",
    "marie",    "kayla",    "alexis",   "lori",     "tiffany",   "carmen",  "rose",    "tracy",
    "bonnie",   "irene",    "paula",    "bertha",   "audrey",    "ellen",   "vivian",  "leah",
    "norma",    "brooke",   "hazel",    "stella",   "willow",    "ramona",  "selena",  "ada",
};

LexiconEntry make_entry(TokenTag tag, int gender = -1, int sector = -1) {
    LexiconEntry e;
    e.tag = tag;
    e.gender = gender;
    e.sector = sector;
    return e;
}

}  // namespace

std::string to_string(TokenTag tag) {
    switch (tag) {
        case TokenTag::sector_content: return "sector_content";
        case TokenTag::gender_proxy: return "gender_proxy";
        case TokenTag::name: return "name";
        case TokenTag::pronoun: return "pronoun";
        case TokenTag::stopword: return "stopword";
        case TokenTag::verb: return "verb";
        case TokenTag::adverb: return "adverb";
        case TokenTag::neutral: return "neutral";
    }
    throw ConfigError("unknown token tag");
}

TokenTag token_tag_from_string(const std::string& s) {
    if (s == "sector_content") return TokenTag::sector_content;
    if (s == "gender_proxy") return TokenTag::gender_proxy;
    if (s == "name") return TokenTag::name;
    if (s == "pronoun") return TokenTag::pronoun;
    if (s == "stopword") return TokenTag::stopword;
    if (s == "verb") return TokenTag::verb;
    if (s == "adverb") return TokenTag::adverb;
    if (s == "neutral") return TokenTag::neutral;
    throw ConfigError("unknown token tag '" + s + "'");
}

const std::vector<std::string>& occupation_tokens() { return kOccupations; }

int sector_of_occupation(int occupation) {
    if (occupation < 0 || occupation >= kNumOccupations) {
        throw IndexError("occupation " + std::to_string(occupation) + " out of range");
    }
    return kOccupationSector[occupation];
}

void Lexicon::add(const std::string& token, LexiconEntry entry) {
    entries_[token] = entry;
}

const LexiconEntry& Lexicon::entry(const std::string& token) const {
    auto it = entries_.find(token);
    if (it == entries_.end()) {
        throw LexiconError("token '" + token + "' not in lexicon");
    }
    return it->second;
}

std::vector<std::string> Lexicon::tokens_with_tag(TokenTag tag, int gender, int sector) const {
    std::vector<std::string> out;
    for (const auto& [token, e] : entries_) {
        if (e.tag != tag) continue;
        if (gender >= 0 && e.gender != gender) continue;
        if (sector >= 0 && e.sector != sector) continue;
        out.push_back(token);
    }
    return out;
}

Lexicon Lexicon::builtin() {
    Lexicon lex;
    for (int occ = 0; occ < kNumOccupations; ++occ) {
        lex.add(kOccupations[occ],
                make_entry(TokenTag::sector_content, -1, kOccupationSector[occ]));
    }
    for (int s = 0; s < kNumSectors; ++s) {
        for (const auto& t : kContent[s]) lex.add(t, make_entry(TokenTag::sector_content, -1, s));
    }
    for (const auto& t : kMaleProxies) lex.add(t, make_entry(TokenTag::gender_proxy, 0));
    for (const auto& t : kFemaleProxies) lex.add(t, make_entry(TokenTag::gender_proxy, 1));
    for (const auto& t : kMalePronouns) lex.add(t, make_entry(TokenTag::pronoun, 0));
    for (const auto& t : kFemalePronouns) lex.add(t, make_entry(TokenTag::pronoun, 1));
    for (const auto& t : kMaleNames) lex.add(t, make_entry(TokenTag::name, 0));
    for (const auto& t : kFemaleNames) lex.add(t, make_entry(TokenTag::name, 1));
    for (const auto& t : kStopwords) lex.add(t, make_entry(TokenTag::stopword));
    for (const auto& t : kVerbs) lex.add(t, make_entry(TokenTag::verb));
    for (const auto& t : kAdverbs) lex.add(t, make_entry(TokenTag::adverb));
    for (const auto& t : kNeutral) lex.add(t, make_entry(TokenTag::neutral));
    return lex;
}

std::string Lexicon::to_json_string() const {
    json entries = json::object();
    for (const auto& [token, e] : entries_) {
        json je;
        je["tag"] = to_string(e.tag);
        if (e.gender >= 0) je["gender"] = e.gender;
        if (e.sector >= 0) je["sector"] = e.sector;
        entries[token] = je;
    }
    json doc;
    doc["version"] = version_;
    doc["entries"] = entries;
    return doc.dump(2) + "\n";
}

Lexicon Lexicon::from_json_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("lexicon parse error: ") + e.what());
    }
    Lexicon lex;
    lex.version_ = doc.at("version").get<int>();
    for (const auto& [token, je] : doc.at("entries").items()) {
        LexiconEntry e;
        e.tag = token_tag_from_string(je.at("tag").get<std::string>());
        e.gender = je.value("gender", -1);
        e.sector = je.value("sector", -1);
        lex.entries_[token] = e;
    }
    return lex;
}

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

void Lexicon::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write lexicon file '" + path + "'");
    out << to_json_string();
}

}  // namespace fairpipe
