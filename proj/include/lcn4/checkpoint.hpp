#pragma once

#include <string>
#include <vector>

#include "lcn4/tensor.hpp"

// Flat checkpoint container: a magic line, the byte length of a JSON header
// on the next line, the header itself (config plus name/shape/offset of every
// array), then raw little-endian float64 data.
namespace lcn4::checkpoint {

inline constexpr const char* kVersion = "lcn4-ckpt-v1";

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Contents {
  std::string config_json;
  std::vector<NamedArray> arrays;

  // nullptr when absent.
  const NamedArray* find(const std::string& name) const;
};

void write(const std::string& path, const Contents& contents);
Contents read(const std::string& path);

}  // namespace lcn4::checkpoint
