#ifndef CSD_TEXT_HPP
#define CSD_TEXT_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csd::text {

/// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);

/// True for ideographs and full-width / CJK punctuation, which tokenize one
/// code point at a time.
bool is_cjk(char32_t cp);
bool is_space(char32_t cp);
bool is_ascii_punct(char32_t cp);
/// ASCII, CJK and full-width punctuation.
bool is_punct(char32_t cp);
/// True if every code point of the token is punctuation.
bool is_punct_token(std::string_view tok);

/// Character-level tokenization for CJK, whitespace-delimited words for Latin
/// runs. ASCII punctuation splits off as its own token, except apostrophes and
/// hyphens inside a word.
std::vector<std::string> tokenize(std::string_view s);

/// Inverse of tokenize for tokenizer output: adjacent Latin word tokens get a
/// single space, everything else is concatenated.
std::string detokenize(std::span<const std::string> tokens);

std::string trim(std::string_view s);

/// Joins tokens with an ASCII unit separator; used as a hash key.
std::string join_key(std::span<const std::string> tokens);

}  // namespace csd::text

#endif  // CSD_TEXT_HPP
