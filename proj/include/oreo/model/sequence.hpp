#pragma once

#include <optional>
#include <vector>

#include "oreo/kg/graph.hpp"
#include "oreo/model/vocab.hpp"

namespace oreo::model {

// A grounded entity mention over raw tokens, [begin, end).
struct Mention {
  std::size_t begin = 0;
  std::size_t end = 0;
  kg::EntityId entity = 0;

  friend bool operator==(const Mention&, const Mention&) = default;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<Mention> mentions;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Positions in the instrumented sequence: [S-ENT] span [REL] [T-ENT].
struct InstrumentedMention {
  kg::EntityId entity = 0;
  std::size_t sent = 0;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  std::size_t rel = 0;
  std::size_t tent = 0;
  // Optional uniform initial state over several candidates.
  std::vector<kg::EntityId> candidates;
};

struct InstrumentedSequence {
  std::vector<TokenId> ids;
  std::vector<InstrumentedMention> mentions;
  // Designated answer [MASK]; scored by the entity head, not the token head.
  std::optional<std::size_t> answer_pos;

  // Every [MASK] except the answer, in position order.
  std::vector<std::size_t> mask_positions() const;
  std::vector<kg::EntityId> mention_entities() const;
};

// Throws InputError when mentions overlap, are unsorted, empty or out of range.
InstrumentedSequence instrument(const TokenSequence& seq);
TokenSequence deinstrument(const InstrumentedSequence& seq);

}  // namespace oreo::model
