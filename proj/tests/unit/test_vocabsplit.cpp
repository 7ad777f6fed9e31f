#include <algorithm>
#include <cctype>
#include <utility>

#include "doctest.h"
#include "ovtal/error.hpp"
#include "ovtal/vocabsplit.hpp"

using namespace ovtal;

namespace {

const std::pair<const char*, const char*> kReference[] = {
#include "porter_reference.inc"
};

std::vector<std::string> upper(std::vector<std::string> v) {
  for (auto& s : v)
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return v;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

const std::vector<std::string> kBenchmark = {
    "Jogging",         "running marathon", "Playing guitar", "Cliff diving",
    "Pole vault",      "Shot put",         "Brushing teeth", "Making a sandwich",
    "Tango dancing",   "Curling",          "Playing the drums", "Hula hoop"};
const std::vector<std::string> kReferenceClasses = {
    "jog", "running on treadmill", "playing guitar", "diving cliff", "playing drums",
    "dancing ballet", "brushing hair", "cleaning teeth", "making tea", "hula hooping"};

}  // namespace

TEST_CASE("spec stems") {
  CHECK(normalize_word("Running") == "run");
  CHECK(normalize_word("run") == "run");
  CHECK(normalize_word("carries") == "carri");
  CHECK(normalize_word("ran") == "run");
  CHECK(normalize_word("Jogging!") == "jog");
  CHECK_THROWS_AS(normalize_word(""), InvalidInput);
  CHECK_THROWS_AS(normalize_word("--"), InvalidInput);
}

TEST_CASE("stems match the reference table") {
  for (const auto& [word, stem] : kReference) {
    INFO(word);
    CHECK(porter_stem(word) == stem);
  }
}

TEST_CASE("stemming is a fixed point on short words") {
  for (const char* w : {"a", "is", "go", "be"}) CHECK(porter_stem(w) == w);
}

TEST_CASE("tokenizer lower-cases and splits on punctuation") {
  CHECK(tokenize_class("Rock-climbing (Indoor)") ==
        std::vector<std::string>{"rock", "climbing", "indoor"});
  CHECK(tokenize_class("  ").empty());
}

TEST_CASE("spec split examples") {
  const auto a = split_categories({"jogging"}, {"jog"});
  CHECK(a.base == std::vector<std::string>{"jogging"});
  CHECK(a.novel.empty());

  const auto b = split_categories({"running marathon"}, {"running"});
  CHECK(b.novel == std::vector<std::string>{"running marathon"});

  const auto c = split_categories({"jogging", "surfing"}, {});
  CHECK(c.base.empty());
  CHECK(c.novel.size() == 2);
}

TEST_CASE("stopwords are ignored and empty classes are rejected") {
  const auto s = split_categories({"Making a sandwich"}, {"making sandwich"});
  CHECK(s.base.size() == 1);
  CHECK_THROWS_AS(split_categories({"the of"}, {"jog"}), InvalidInput);
  CHECK_THROWS_AS(split_categories({}, {"jog"}), InvalidInput);
}

TEST_CASE("split is a partition") {
  const auto s = split_categories(kBenchmark, kReferenceClasses);
  std::vector<std::string> all = s.base;
  all.insert(all.end(), s.novel.begin(), s.novel.end());
  CHECK(sorted(all) == sorted(kBenchmark));
  for (const auto& b : s.base)
    CHECK(std::find(s.novel.begin(), s.novel.end(), b) == s.novel.end());
  CHECK(sorted(s.base) ==
        sorted({"Jogging", "Playing guitar", "Cliff diving", "Brushing teeth", "Playing the drums",
                "Hula hoop"}));
}

TEST_CASE("split is case-insensitive") {
  const auto a = split_categories(kBenchmark, kReferenceClasses);
  const auto b = split_categories(upper(kBenchmark), kReferenceClasses);
  const auto c = split_categories(kBenchmark, upper(kReferenceClasses));
  CHECK(upper(a.base) == b.base);
  CHECK(upper(a.novel) == b.novel);
  CHECK(a.base == c.base);
  CHECK(a.novel == c.novel);
}

TEST_CASE("split is idempotent under stemming") {
  auto stem_all = [](const std::vector<std::string>& classes) {
    std::vector<std::string> out;
    for (const auto& c : classes) {
      std::string joined;
      for (const auto& tok : tokenize_class(c)) joined += (joined.empty() ? "" : " ") + normalize_word(tok);
      out.push_back(joined);
    }
    return out;
  };
  const auto a = split_categories(kBenchmark, kReferenceClasses);
  const auto b = split_categories(stem_all(kBenchmark), stem_all(kReferenceClasses));
  const auto sa = stem_all(a.base), sn = stem_all(a.novel);
  CHECK(b.base == sa);
  CHECK(b.novel == sn);
}
