#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace oreo::model {

using TokenId = std::uint32_t;

// Word-level vocabulary. The first entries are always the special tokens, in
// this order, so their ids are fixed.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kSEnt = 2;
  static constexpr TokenId kRel = 3;
  static constexpr TokenId kTEnt = 4;
  static constexpr TokenId kUnk = 5;
  static const std::vector<std::string>& specials();

  Vocab();
  // `words` may or may not start with the specials; duplicates are ignored.
  explicit Vocab(const std::vector<std::string>& words);

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId add(std::string_view word);
  // Throws InputError for unknown words unless `allow_unk`.
  TokenId id(std::string_view word, bool allow_unk = false) const;
  bool contains(std::string_view word) const { return index_.contains(word); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  static bool is_special(TokenId id) noexcept { return id <= kUnk; }

  std::vector<TokenId> encode(const std::vector<std::string>& words, bool allow_unk = false) const;

  // One token per line.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> index_;
};

}  // namespace oreo::model
