#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "touchadd/geometry.hpp"

namespace touchadd::placement {

class TokenizerError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum SpecialToken : int { kPad = 0, kBos = 1, kEos = 2, kSep = 3, kUnk = 4 };
inline constexpr int kNumSpecial = 5;

enum class CoordAxis : int { kX = 0, kY = 1, kW = 2, kH = 3 };

enum class TokenRole : std::uint8_t { kPrompt, kReasoning, kCoordinate, kSpecial };

/// Word-level vocabulary over a closed grammar plus quantized coordinate
/// tokens <X_00>..<X_99>, <Y_..>, <W_..>, <H_..>.
///
/// Layout: the five specials, then four contiguous coordinate ranges of
/// kCoordBins ids each (X, Y, W, H), then the words in sorted order.
class Vocabulary {
 public:
  /// Builds the vocabulary from a word list; duplicates are dropped and the
  /// words sorted so ids do not depend on input order.
  static Vocabulary from_words(std::vector<std::string> words);

  /// Vocabulary covering the synthetic caption grammar and the prompt template.
  static Vocabulary standard();

  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const noexcept;
  const std::string& token(int id) const;

  int coord_token(CoordAxis axis, int bin) const;
  bool is_coord(int id) const noexcept { return id >= kNumSpecial && id < kNumSpecial + 4 * kCoordBins; }
  CoordAxis coord_axis(int id) const;
  int coord_bin(int id) const;

  /// Splits on whitespace; leading/trailing punctuation becomes its own token.
  static std::vector<std::string> split_words(std::string_view text);

  std::vector<int> tokenize(std::string_view text) const;
  /// Joins word tokens with spaces, attaching punctuation to the previous word.
  /// Specials and coordinate tokens are skipped.
  std::string detokenize(std::span<const int> ids) const;

  /// The word entries only (no specials or coordinate tokens), in id order.
  std::vector<std::string> words() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<TokenRole> roles;

  std::size_t size() const noexcept { return ids.size(); }
};

/// [BOS, prompt words...] for the instruction's placement query.
TokenSequence encode_prompt(std::string_view instruction, const Vocabulary& vocab);

/// [reasoning words..., SEP, <X_q>, <Y_q>, <W_q>, <H_q>, EOS] with q the
/// quantized coordinates. In training mode reasoning containing unknown
/// words is rejected.
TokenSequence encode_response(std::string_view reasoning, const NormalizedBBox& bbox,
                              const Vocabulary& vocab, bool training = true);

struct DecodedResponse {
  std::string reasoning;
  std::optional<NormalizedBBox> bbox;
};

/// Reasoning text before the first SEP (or the first coordinate token) and the
/// box from the last consecutive X, Y, W, H quadruple, dequantized to bin
/// centers. bbox is empty when no quadruple is present.
DecodedResponse decode_response(std::span<const int> ids, const Vocabulary& vocab);

}  // namespace touchadd::placement
