#include "nanet/morse.hpp"

#include "nanet/error.hpp"

#include <array>
#include <string_view>

namespace nanet::morse {
namespace {

// ITU-R M.1677-1, letters only.
constexpr std::array<std::string_view, kNumLetters> kCodes = {
    ".-",   "-...", "-.-.", "-..",  ".",   "..-.", "--.",  "....", "..",
    ".---", "-.-",  ".-..", "--",   "-.",  "---",  ".--.", "--.-", ".-.",
    "...",  "-",    "..-",  "...-", ".--", "-..-", "-.--", "--.."};

bool is_ascii_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

} // namespace

int letter_index(char letter) {
  if (!is_ascii_letter(letter))
    throw NonLetterInput(std::string("not an ASCII letter: '") + letter + "'");
  return (letter >= 'a') ? letter - 'a' : letter - 'A';
}

char index_letter(int index) {
  if (index < 0 || index >= kNumLetters)
    throw NonLetterInput("class index out of range: " + std::to_string(index));
  return static_cast<char>('A' + index);
}

Sequence encode_letter(char letter) {
  const int idx = letter_index(letter);
  Sequence seq;
  seq.letter = static_cast<char>('A' + idx);
  for (char c : kCodes[idx])
    seq.symbols.push_back(c == '.' ? Symbol::Dot : Symbol::Dash);
  return seq;
}

char decode_sequence(std::span<const Symbol> symbols) {
  const std::string code = to_string(symbols);
  for (int i = 0; i < kNumLetters; ++i)
    if (kCodes[i] == code)
      return static_cast<char>('A' + i);
  throw UnknownCode("no letter has Morse code \"" + code + "\"");
}

std::string to_string(std::span<const Symbol> symbols) {
  std::string out;
  out.reserve(symbols.size());
  for (auto s : symbols)
    out.push_back(s == Symbol::Dot ? '.' : '-');
  return out;
}

} // namespace nanet::morse
