#pragma once

#include <map>
#include <string>
#include <vector>

#include "gcanet/tensor.hpp"

namespace gcanet {

// Little-endian binary container: magic "GCAT", u32 version=1, u32 count,
// then per entry u16 name length, UTF-8 name, 4xu64 shape, f64 payload.
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> load_tensors(const std::string& path);

}  // namespace gcanet
