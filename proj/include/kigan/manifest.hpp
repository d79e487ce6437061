#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "kigan/checkpoint.hpp"
#include "kigan/json_io.hpp"

namespace kigan {

constexpr const char* kVersionString = "kigan 0.1.0";

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw_data("write to '" + path + "' failed");
}

inline std::string content_digest(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

// One manifest per run: command, full config echo, seed, content digests of
// every input and output. Re-running with the manifest's config and inputs
// reproduces the output digests.
struct RunManifest {
  std::string command;
  json config_echo = json::object();
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();

  void add_input(const std::string& path, std::string_view bytes) {
    inputs[path] = content_digest(bytes);
  }
  void add_output(const std::string& path, std::string_view bytes) {
    outputs[path] = content_digest(bytes);
  }

  json to_json() const {
    return json{{"version", kVersionString}, {"command", command},   {"seed", seed},
                {"config", config_echo},     {"inputs", inputs},     {"outputs", outputs}};
  }

  void write(const std::filesystem::path& dir) const {
    write_file((dir / "manifest.json").string(), to_json().dump(2) + "\n");
  }
};

}  // namespace kigan
