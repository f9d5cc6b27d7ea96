#include "lcn4/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lcn4/errors.hpp"

namespace lcn4::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint data is little-endian");

const NamedArray* Contents::find(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void write(const std::string& path, const Contents& contents) {
  nlohmann::json header;
  header["version"] = kVersion;
  header["config"] = contents.config_json.empty() ? nlohmann::json::object()
                                                  : nlohmann::json::parse(contents.config_json);
  header["arrays"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const NamedArray& a : contents.arrays) {
    if (shape_numel(a.shape) != a.values.size()) {
      throw DimensionError("checkpoint array '" + a.name + "' shape does not match its data");
    }
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.values.size() * sizeof(double);
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << kVersion << '\n' << text.size() << '\n' << text;
  for (const NamedArray& a : contents.arrays) {
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path);
}

Contents read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string magic, length_line;
  std::getline(in, magic);
  if (magic != kVersion) throw IoError(path + " is not an " + std::string(kVersion) + " checkpoint");
  std::getline(in, length_line);
  std::size_t length = 0;
  try {
    length = std::stoul(length_line);
  } catch (const std::exception&) {
    throw IoError(path + ": malformed header length");
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw IoError(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad header: " + e.what());
  }
  const std::streamoff data_start = in.tellg();

  Contents contents;
  contents.config_json = header.value("config", nlohmann::json::object()).dump();
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<Shape>();
    a.values.resize(shape_numel(a.shape));
    in.seekg(data_start + entry.at("offset").get<std::streamoff>());
    in.read(reinterpret_cast<char*>(a.values.data()),
            static_cast<std::streamsize>(a.values.size() * sizeof(double)));
    if (!in) throw IoError(path + ": truncated data for '" + a.name + "'");
    contents.arrays.push_back(std::move(a));
  }
  return contents;
}

}  // namespace lcn4::checkpoint
