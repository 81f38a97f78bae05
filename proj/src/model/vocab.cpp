#include "oreo/model/vocab.hpp"

#include <fstream>

#include "oreo/error.hpp"

namespace oreo::model {

const std::vector<std::string>& Vocab::specials() {
  static const std::vector<std::string> s{"[PAD]", "[MASK]", "[S-ENT]", "[REL]", "[T-ENT]", "[UNK]"};
  return s;
}

Vocab::Vocab() {
  for (const auto& s : specials()) add(s);
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
  for (const auto& w : words) add(w);
}

TokenId Vocab::add(std::string_view word) {
  if (word.empty()) throw InputError("vocab: empty token");
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(word);
  index_.emplace(std::string(word), id);
  return id;
}

TokenId Vocab::id(std::string_view word, bool allow_unk) const {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  if (allow_unk) return kUnk;
  throw InputError("vocab: unknown token '" + std::string(word) + "'");
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& words, bool allow_unk) const {
  std::vector<TokenId> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w, allow_unk));
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<std::string> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.find_first_of(" \t\r") != std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": token contains whitespace");
    }
    words.push_back(line);
  }
  for (std::size_t i = 0; i < specials().size(); ++i) {
    if (i >= words.size() || words[i] != specials()[i]) {
      throw ParseError(path.string() + ": vocabulary must start with the special tokens");
    }
  }
  return Vocab(words);
}

}  // namespace oreo::model
