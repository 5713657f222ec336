#include "field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "errors.hpp"

namespace brwre {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_le64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  if (fs::exists(path)) fail(ErrorCode::io, "refusing to overwrite existing artifact " + path.string());
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_text_file(const fs::path& path, const std::string& text) { write_bytes(path, text); }

void write_field(const fs::path& path, const Field& field, const FieldMeta& meta) {
  json header;
  header["n"] = meta.n;
  header["L"] = meta.L;
  header["kind"] = meta.kind;
  header["seed"] = meta.seed ? json(*meta.seed) : json(nullptr);
  header["dist"] = meta.dist ? json(*meta.dist) : json(nullptr);
  std::string bytes = header.dump();
  bytes.push_back('\n');
  bytes.reserve(bytes.size() + 8 * field.size());
  for (double v : field.values()) put_le64(bytes, v);
  write_bytes(path, bytes);
}

void write_field(const fs::path& path, const Field& field, const std::string& kind) {
  FieldMeta meta;
  meta.n = field.grid().n();
  meta.L = field.grid().L();
  meta.kind = kind;
  write_field(path, field, meta);
}

LoadedField read_field(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) fail(ErrorCode::io, path.string() + ": missing .fld header");
  json header;
  try {
    header = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    fail(ErrorCode::io, path.string() + ": malformed .fld header: " + e.what());
  }
  FieldMeta meta;
  try {
    meta.n = header.at("n").get<int>();
    meta.L = header.at("L").get<double>();
    meta.kind = header.value("kind", std::string{});
    if (header.contains("seed") && !header["seed"].is_null()) meta.seed = header["seed"].get<std::uint64_t>();
    if (header.contains("dist") && !header["dist"].is_null()) meta.dist = header["dist"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::io, path.string() + ": bad .fld header field: " + e.what());
  }
  const Grid grid(meta.n, meta.L);
  const std::size_t expected = grid.site_count() * 8;
  if (bytes.size() - newline - 1 != expected) {
    fail(ErrorCode::io, path.string() + ": payload size does not match header");
  }
  std::vector<double> values(grid.site_count());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + newline + 1);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_le64(p + 8 * i);
  return {Field(grid, std::move(values)), meta};
}

void write_environment_bundle(const fs::path& dir, const EnvironmentField& env) {
  FieldMeta meta;
  meta.n = env.grid().n();
  meta.L = env.grid().L();
  meta.seed = env.seed;
  meta.dist = to_string(env.dist);
  meta.kind = "xi";
  write_field(dir / "xi.fld", env.xi, meta);
  meta.kind = "Ixi";
  write_field(dir / "Ixi.fld", env.I_xi, meta);
  meta.kind = "resonant";
  write_field(dir / "resonant.fld", env.resonant, meta);
  json m;
  m["n"] = meta.n;
  m["L"] = meta.L;
  m["seed"] = env.seed;
  m["dist"] = to_string(env.dist);
  m["truncation"] = env.truncation;
  m["c_n"] = env.c_n;
  m["nu_hat"] = env.nu_hat;
  m["sites"] = env.grid().site_count();
  write_bytes(dir / "meta.json", m.dump(2) + "\n");
}

EnvironmentField read_environment_bundle(const fs::path& dir) {
  auto xi = read_field(dir / "xi.fld");
  json m;
  try {
    m = json::parse(read_bytes(dir / "meta.json"));
  } catch (const json::exception& e) {
    fail(ErrorCode::io, (dir / "meta.json").string() + ": " + e.what());
  }
  const auto dist = parse_distribution(m.value("dist", std::string("custom")));
  auto env = environment_from_values(xi.field, dist, m.value("seed", std::uint64_t{0}));
  env.truncation = m.value("truncation", 3.0);
  const double c_n = m.value("c_n", env.c_n);
  return with_renormalization(std::move(env), c_n);
}

}  // namespace brwre
