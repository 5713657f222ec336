#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "environment.hpp"
#include "grid.hpp"

namespace brwre {

// .fld layout: one line of JSON {"n","L","kind","seed","dist"} terminated by
// '\n', followed by side*side little-endian float64 values, row-major.
struct FieldMeta {
  int n = 1;
  double L = 4.0;
  std::string kind;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dist;
};

// Fails with ErrorCode::io if the file exists (outputs are append-only).
void write_field(const std::filesystem::path& path, const Field& field, const FieldMeta& meta);
void write_field(const std::filesystem::path& path, const Field& field, const std::string& kind);

struct LoadedField {
  Field field;
  FieldMeta meta;
};
LoadedField read_field(const std::filesystem::path& path);

// Directory with xi.fld, Ixi.fld, resonant.fld and meta.json.
void write_environment_bundle(const std::filesystem::path& dir, const EnvironmentField& env);
EnvironmentField read_environment_bundle(const std::filesystem::path& dir);

// Creates parent directories; fails if the file already exists.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace brwre
