#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ovtal {

/// Porter (1980) suffix stripping on a lower-case ASCII word.
std::string porter_stem(std::string word);

/// Lower-cases, strips non-alphanumerics, maps irregular verb forms to their
/// base form, then stems. Throws InvalidInput if nothing is left.
std::string normalize_word(std::string_view word);

/// Splits a class name into lower-cased, punctuation-stripped tokens.
std::vector<std::string> tokenize_class(std::string_view name);

/// The built-in English function-word list.
const std::set<std::string>& default_stopwords();

struct CategorySplit {
  std::vector<std::string> base;
  std::vector<std::string> novel;
};

/// A benchmark class is base iff every content word's stem appears among
/// the stems of the reference class names; otherwise it is novel.
CategorySplit split_categories(const std::vector<std::string>& benchmark,
                               const std::vector<std::string>& reference,
                               const std::set<std::string>& stopwords = default_stopwords());

}  // namespace ovtal
