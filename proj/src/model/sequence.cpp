#include "oreo/model/sequence.hpp"

#include <string>

#include "oreo/error.hpp"

namespace oreo::model {

std::vector<std::size_t> InstrumentedSequence::mask_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == Vocab::kMask && answer_pos != i) out.push_back(i);
  }
  return out;
}

std::vector<kg::EntityId> InstrumentedSequence::mention_entities() const {
  std::vector<kg::EntityId> out;
  for (const auto& m : mentions) out.push_back(m.entity);
  return out;
}

InstrumentedSequence instrument(const TokenSequence& seq) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < seq.mentions.size(); ++i) {
    const Mention& m = seq.mentions[i];
    if (m.begin >= m.end || m.end > seq.ids.size()) {
      throw InputError("instrument: mention " + std::to_string(i) + " has an invalid span");
    }
    if (i > 0 && m.begin < prev_end) {
      throw InputError("instrument: mention " + std::to_string(i) + " overlaps or precedes mention " +
                       std::to_string(i - 1));
    }
    prev_end = m.end;
  }
  InstrumentedSequence out;
  out.ids.reserve(seq.ids.size() + 3 * seq.mentions.size());
  std::size_t pos = 0;
  for (const Mention& m : seq.mentions) {
    out.ids.insert(out.ids.end(), seq.ids.begin() + pos, seq.ids.begin() + m.begin);
    InstrumentedMention im;
    im.entity = m.entity;
    im.sent = out.ids.size();
    out.ids.push_back(Vocab::kSEnt);
    im.span_begin = out.ids.size();
    out.ids.insert(out.ids.end(), seq.ids.begin() + m.begin, seq.ids.begin() + m.end);
    im.span_end = out.ids.size();
    im.rel = out.ids.size();
    out.ids.push_back(Vocab::kRel);
    im.tent = out.ids.size();
    out.ids.push_back(Vocab::kTEnt);
    out.mentions.push_back(im);
    pos = m.end;
  }
  out.ids.insert(out.ids.end(), seq.ids.begin() + pos, seq.ids.end());
  return out;
}

TokenSequence deinstrument(const InstrumentedSequence& seq) {
  TokenSequence out;
  std::vector<bool> special(seq.ids.size(), false);
  for (const auto& m : seq.mentions) {
    for (std::size_t p : {m.sent, m.rel, m.tent}) {
      if (p >= seq.ids.size()) throw InputError("deinstrument: position out of range");
      special[p] = true;
    }
  }
  std::vector<std::size_t> shift(seq.ids.size() + 1, 0);
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    shift[i + 1] = shift[i] + (special[i] ? 1 : 0);
    if (!special[i]) out.ids.push_back(seq.ids[i]);
  }
  for (const auto& m : seq.mentions) {
    out.mentions.push_back({m.span_begin - shift[m.span_begin], m.span_end - shift[m.span_end], m.entity});
  }
  return out;
}

}  // namespace oreo::model
