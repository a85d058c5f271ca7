#pragma once

#include <string>
#include <vector>

#include "emcom/errors.hpp"
#include "emcom/nn.hpp"

namespace emcom::agent {

// Discrete message channel: L tokens per step from a vocabulary of size |V|,
// delivered one-hot. seq_len 0 disables the channel entirely.
struct LanguageSpec {
  int vocab_size = 3;
  int seq_len = 1;

  int block_width() const { return seq_len * vocab_size; }
  bool enabled() const { return seq_len > 0; }
};

struct Message {
  std::vector<int> tokens;  // exactly seq_len values in [0, vocab_size)

  bool operator==(const Message& o) const { return tokens == o.tokens; }
};

inline std::string format_message(const Message& m) {
  std::string s;
  for (std::size_t i = 0; i < m.tokens.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(m.tokens[i]);
  }
  return s;
}

// Fixed input layout: environment features first, then the one-hot message
// block. interpret and probes index into inputs through this.
struct InputLayout {
  int env_dim = 0;
  LanguageSpec lang;

  int input_dim() const { return env_dim + lang.block_width(); }
  int message_offset() const { return env_dim; }
  bool is_message_feature(int i) const { return i >= env_dim && i < input_dim(); }
};

// One-hot encode a message into `out[offset...]`. A null message (start of
// episode) leaves the block all zeros.
template <class S>
void write_message_block(const Message* msg, const LanguageSpec& spec, nn::Vec<S>& out,
                         int offset) {
  for (int i = 0; i < spec.block_width(); ++i) out[offset + i] = S(0);
  if (!msg) return;
  if (static_cast<int>(msg->tokens.size()) != spec.seq_len)
    throw UsageError("message length " + std::to_string(msg->tokens.size()) +
                     " does not match seq_len " + std::to_string(spec.seq_len));
  for (int t = 0; t < spec.seq_len; ++t) {
    const int tok = msg->tokens[t];
    if (tok < 0 || tok >= spec.vocab_size)
      throw UsageError("token " + std::to_string(tok) + " out of range for vocab " +
                       std::to_string(spec.vocab_size));
    out[offset + t * spec.vocab_size + tok] = S(1);
  }
}

template <class S>
nn::Vec<S> encode_input(const std::vector<double>& env_obs, const Message* incoming,
                        const LanguageSpec& spec) {
  nn::Vec<S> x(static_cast<int>(env_obs.size()) + spec.block_width());
  for (std::size_t i = 0; i < env_obs.size(); ++i) x[static_cast<int>(i)] = static_cast<S>(env_obs[i]);
  write_message_block(incoming, spec, x, static_cast<int>(env_obs.size()));
  return x;
}

// Enumerate all |V|^L messages in lexicographic token order (first token most
// significant). Index round-trips with message_index.
inline Message message_from_index(int index, const LanguageSpec& spec) {
  Message m;
  m.tokens.assign(spec.seq_len, 0);
  for (int t = spec.seq_len - 1; t >= 0; --t) {
    m.tokens[t] = index % spec.vocab_size;
    index /= spec.vocab_size;
  }
  return m;
}

inline long long message_count(const LanguageSpec& spec) {
  long long n = 1;
  for (int t = 0; t < spec.seq_len; ++t) n *= spec.vocab_size;
  return n;
}

}  // namespace emcom::agent
