#pragma once

#include <stdexcept>

namespace rlad {

// Token-id space for one task family. The three control ids are distinct,
// below size, and excluded from task alphabets; size is at least 4.
struct Vocab {
  int size = 0;
  int bos = 0;
  int eos = 0;
  int pad = 0;

  bool operator==(const Vocab&) const = default;

  void validate() const {
    if (size < 4) throw std::runtime_error("vocab: size must be >= 4");
    if (bos == eos || bos == pad || eos == pad)
      throw std::runtime_error("vocab: control tokens must be distinct");
    for (int t : {bos, eos, pad})
      if (t < 0 || t >= size) throw std::runtime_error("vocab: control token out of range");
  }
};

}  // namespace rlad
