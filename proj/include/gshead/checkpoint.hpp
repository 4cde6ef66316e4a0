#pragma once

#include <map>
#include <string>

#include "gshead/tensor.hpp"

namespace gshead {

// Single-file parameter checkpoint: fixed header, JSON manifest listing
// (name, shape, dtype, byte offset) in lexicographic name order, then the
// raw little-endian element payload. The config string travels verbatim.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_text);

struct LoadedCheckpoint {
  uint32_t version = 0;
  std::string config_text;
  std::map<std::string, Tensor> tensors;  // leaves, no grad
};

LoadedCheckpoint read_checkpoint(const std::string& path);

// Copies checkpoint values into an already-constructed store. Every store
// parameter must be present with a matching shape; extra checkpoint entries
// are rejected unless listed in `optional_prefixes` semantics by the caller.
void load_into_store(ParamStore& store, const LoadedCheckpoint& ckpt);

}  // namespace gshead
