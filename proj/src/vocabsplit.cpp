#include "ovtal/vocabsplit.hpp"

#include <cctype>
#include <map>

#include "ovtal/error.hpp"

namespace ovtal {

namespace {

// Direct transcription of the published algorithm. `b` holds the word,
// `k` is the index of its last character, `j` marks a suffix boundary.
class PorterStemmer {
 public:
  explicit PorterStemmer(std::string w) : b_(std::move(w)), k_(static_cast<int>(b_.size()) - 1) {}

  std::string run() {
    if (k_ < 0) return b_;
    step1ab();
    step1c();
    step2();
    step3();
    step4();
    step5();
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

 private:
  bool cons(int i) const {
    switch (b_[static_cast<std::size_t>(i)]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !cons(i - 1);
      default: return true;
    }
  }

  // Number of VC sequences in b[0..j].
  int m() const {
    int n = 0, i = 0;
    while (true) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i)
      if (!cons(i)) return true;
    return false;
  }

  bool double_c(int i) const {
    if (i < 1) return false;
    if (b_[static_cast<std::size_t>(i)] != b_[static_cast<std::size_t>(i - 1)]) return false;
    return cons(i);
  }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char c = b_[static_cast<std::size_t>(i)];
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool ends(std::string_view s) {
    const int len = static_cast<int>(s.size());
    if (len > k_ + 1) return false;
    if (b_.compare(static_cast<std::size_t>(k_ - len + 1), s.size(), s) != 0) return false;
    j_ = k_ - len;
    return true;
  }

  void set_to(std::string_view s) {
    b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
    k_ = j_ + static_cast<int>(s.size());
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void r(std::string_view s) {
    if (m() > 0) set_to(s);
  }

  char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

  void step1ab() {
    if (at(k_) == 's') {
      if (ends("sses")) {
        k_ -= 2;
      } else if (ends("ies")) {
        set_to("i");
      } else if (k_ >= 1 && at(k_ - 1) != 's') {
        --k_;
      }
    }
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      if (ends("at")) {
        set_to("ate");
      } else if (ends("bl")) {
        set_to("ble");
      } else if (ends("iz")) {
        set_to("ize");
      } else if (double_c(k_)) {
        --k_;
        const char ch = at(k_);
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else {
        j_ = k_;
        if (m() == 1 && cvc(k_)) set_to("e");
      }
    }
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
  }

  void step2() {
    static const std::pair<const char*, const char*> rules[] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
    };
    apply_first(rules);
  }

  void step3() {
    static const std::pair<const char*, const char*> rules[] = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""},
    };
    apply_first(rules);
  }

  template <std::size_t N>
  void apply_first(const std::pair<const char*, const char*> (&rules)[N]) {
    // Only the longest matching suffix is considered.
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < N; ++i) {
      std::string_view suf(rules[i].first);
      if (suf.size() > best_len && ends(suf)) {
        best = static_cast<int>(i);
        best_len = suf.size();
      }
    }
    if (best >= 0) {
      ends(rules[best].first);
      r(rules[best].second);
    }
  }

  void step4() {
    static const char* suffixes[] = {"al",   "ance", "ence", "er",  "ic",  "able", "ible",
                                     "ant",  "ement", "ment", "ent", "ion", "ou",   "ism",
                                     "ate",  "iti",  "ous",  "ive", "ize"};
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < std::size(suffixes); ++i) {
      std::string_view suf(suffixes[i]);
      if (suf.size() > best_len && ends(suf)) {
        best = static_cast<int>(i);
        best_len = suf.size();
      }
    }
    if (best < 0) return;
    ends(suffixes[best]);
    if (std::string_view(suffixes[best]) == "ion" &&
        !(j_ >= 0 && (at(j_) == 's' || at(j_) == 't')))
      return;
    if (m() > 1) k_ = j_;
  }

  void step5() {
    j_ = k_;
    if (at(k_) == 'e') {
      const int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    j_ = k_;
    if (at(k_) == 'l' && double_c(k_) && m() > 1) --k_;
  }

  std::string b_;
  int k_;
  int j_ = 0;
};

const std::map<std::string, std::string>& irregular_forms() {
  static const std::map<std::string, std::string> table = {
      {"ran", "run"},       {"swam", "swim"},   {"swum", "swim"},     {"sang", "sing"},
      {"sung", "sing"},     {"rode", "ride"},   {"ridden", "ride"},   {"threw", "throw"},
      {"thrown", "throw"},  {"went", "go"},     {"gone", "go"},       {"did", "do"},
      {"done", "do"},       {"ate", "eat"},     {"eaten", "eat"},     {"wrote", "write"},
      {"written", "write"}, {"drove", "drive"}, {"driven", "drive"},  {"flew", "fly"},
      {"flown", "fly"},     {"dove", "dive"},   {"dug", "dig"},       {"caught", "catch"},
      {"spun", "spin"},     {"took", "take"},   {"taken", "take"},    {"shot", "shoot"},
      {"won", "win"},       {"sat", "sit"},     {"stood", "stand"},   {"blew", "blow"},
      {"blown", "blow"},    {"climbed", "climb"}, {"kicked", "kick"}, {"children", "child"},
      {"men", "man"},       {"women", "woman"}, {"feet", "foot"},     {"teeth", "tooth"},
  };
  return table;
}

std::string strip_lower(std::string_view word) {
  std::string out;
  for (unsigned char c : word)
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

}  // namespace

std::string porter_stem(std::string word) {
  if (word.size() <= 2) return word;
  return PorterStemmer(std::move(word)).run();
}

std::string normalize_word(std::string_view word) {
  std::string w = strip_lower(word);
  if (w.empty()) throw InvalidInput("normalize_word: empty token");
  const auto& irr = irregular_forms();
  if (auto it = irr.find(w); it != irr.end()) w = it->second;
  return porter_stem(std::move(w));
}

std::vector<std::string> tokenize_class(std::string_view name) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    std::string t = strip_lower(cur);
    if (!t.empty()) tokens.push_back(std::move(t));
    cur.clear();
  };
  for (char c : name) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '/' ||
        c == ',' || c == '(' || c == ')')
      flush();
    else
      cur.push_back(c);
  }
  flush();
  return tokens;
}

const std::set<std::string>& default_stopwords() {
  // 50 function words.
  static const std::set<std::string> words = {
      "a",     "an",    "the",   "and",  "or",    "but",  "nor",   "of",    "in",   "on",
      "at",    "to",    "for",   "with", "by",    "from", "into",  "onto",  "over", "under",
      "up",    "down",  "out",   "off",  "about", "as",   "than",  "then",  "is",   "are",
      "was",   "were",  "be",    "been", "being", "it",   "its",   "this",  "that", "these",
      "those", "his",   "her",   "their", "your", "my",   "our",   "some",  "any",  "while",
  };
  return words;
}

CategorySplit split_categories(const std::vector<std::string>& benchmark,
                               const std::vector<std::string>& reference,
                               const std::set<std::string>& stopwords) {
  if (benchmark.empty()) throw InvalidInput("split_categories: empty benchmark class list");
  std::set<std::string> ref_stems;
  for (const auto& cls : reference)
    for (const auto& tok : tokenize_class(cls))
      if (!stopwords.count(tok)) ref_stems.insert(normalize_word(tok));

  CategorySplit out;
  for (const auto& cls : benchmark) {
    std::vector<std::string> content;
    for (const auto& tok : tokenize_class(cls))
      if (!stopwords.count(tok)) content.push_back(normalize_word(tok));
    if (content.empty())
      throw InvalidInput("split_categories: class '" + cls + "' has no content words");
    bool all_known = true;
    for (const auto& s : content) all_known = all_known && ref_stems.count(s) > 0;
    (all_known ? out.base : out.novel).push_back(cls);
  }
  return out;
}

}  // namespace ovtal
