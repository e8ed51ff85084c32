#pragma once

#include <span>
#include <string>
#include <vector>

namespace nanet::morse {

enum class Symbol : unsigned char { Dot, Dash };

constexpr int kNumLetters = 26;

struct Sequence {
  char letter = 'A';
  std::vector<Symbol> symbols;

  bool operator==(const Sequence &) const = default;
};

/// International Morse code for an ASCII letter (case-insensitive).
/// Throws NonLetterInput for anything outside a-z / A-Z.
Sequence encode_letter(char letter);

/// Inverse of encode_letter. Throws UnknownCode when no letter matches.
char decode_sequence(std::span<const Symbol> symbols);

/// "." / "-" rendering, e.g. ".-" for A.
std::string to_string(std::span<const Symbol> symbols);

/// 0-based class index for 'A'..'Z' (case-insensitive).
int letter_index(char letter);
char index_letter(int index);

} // namespace nanet::morse
