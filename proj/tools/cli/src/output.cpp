#include "subtomo_cli/output.hpp"

#include <fstream>

#include "subtomo/error.hpp"

namespace subtomo::cli {

OutputDir::OutputDir(std::filesystem::path dir, std::string command, std::string config_hash,
                     std::uint64_t master_seed)
    : dir_(std::move(dir)), command_(std::move(command)), hash_(std::move(config_hash)), seed_(master_seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error("cannot create output directory " + dir_.string() + ": " + ec.message());
}

std::string OutputDir::csv_preamble() const {
  return "# subtomo " + command_ + " config_hash=" + hash_ + " seed=" + std::to_string(seed_) + "\n";
}

void OutputDir::write_file(const std::string& name, const std::string& data) {
  const auto path = dir_ / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("failed writing " + path.string());
  written_.push_back(name);
}

void OutputDir::write_csv(const std::string& name, const std::string& body) {
  write_file(name, csv_preamble() + body);
}

void OutputDir::write_json(const std::string& name, const nlohmann::ordered_json& doc) {
  nlohmann::ordered_json out;
  out["command"] = command_;
  out["config_hash"] = hash_;
  out["master_seed"] = seed_;
  for (auto it = doc.begin(); it != doc.end(); ++it) out[it.key()] = it.value();
  write_file(name, out.dump(2) + "\n");
}

void OutputDir::write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  write_file(name, std::string(bytes.begin(), bytes.end()));
}

void OutputDir::write_provenance(const ConfigReader& config) {
  nlohmann::ordered_json doc;
  doc["command"] = command_;
  doc["config_hash"] = hash_;
  doc["master_seed"] = seed_;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [key, value] : config.resolved()) cfg[key] = value;
  doc["config"] = cfg;
  doc["outputs"] = written_;
  const auto path = dir_ / "provenance.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << "\n";
}

}  // namespace subtomo::cli
