#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "subtomo_cli/config.hpp"

namespace subtomo::cli {

// Writes every output of one command into a directory. CSVs get a leading
// "# ..." line with the command, config hash and master seed; JSON documents
// get the same fields. provenance.json lists the effective config and the
// files written. Nothing time- or host-dependent is recorded.
class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, std::string command, std::string config_hash,
            std::uint64_t master_seed);

  const std::filesystem::path& path() const { return dir_; }
  std::string csv_preamble() const;

  void write_csv(const std::string& name, const std::string& body);
  void write_json(const std::string& name, const nlohmann::ordered_json& body);
  void write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes);
  void write_provenance(const ConfigReader& config);

  const std::string& config_hash() const { return hash_; }
  std::uint64_t master_seed() const { return seed_; }

 private:
  void write_file(const std::string& name, const std::string& data);

  std::filesystem::path dir_;
  std::string command_;
  std::string hash_;
  std::uint64_t seed_;
  std::vector<std::string> written_;
};

}  // namespace subtomo::cli
