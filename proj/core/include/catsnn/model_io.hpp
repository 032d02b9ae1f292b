#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "catsnn/model.hpp"

// Model container: "CSNNMODL", u32 version, u32 section count, then tagged
// sections (4-byte tag, u64 length, payload). All integers and doubles are
// little-endian; doubles are stored bit-exact.
//
//   ARCH  input shape + architecture text
//   SNNC  LIF constants, activation, readout
//   PROV  stage provenance lines
//   HASH  config hash
//   LAYR  one per weight layer: latent tensor + payload
namespace catsnn {

std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace catsnn
