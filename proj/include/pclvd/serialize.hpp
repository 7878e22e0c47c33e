#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "pclvd/circuit.hpp"
#include "pclvd/materialize.hpp"

namespace pclvd {

inline constexpr const char* kCircuitFormat = "pc-lvd-circuit";
inline constexpr int kCircuitVersion = 1;

/// Circuit plus the LV materialization records that travel with it.
struct CircuitDocument {
    Circuit circuit;
    std::vector<MaterializationRecord> lv_records;
};

nlohmann::json circuit_to_json(const Circuit& c, const std::vector<MaterializationRecord>& records = {});
CircuitDocument circuit_from_json(const nlohmann::json& j);

void save_circuit(const std::filesystem::path& path, const Circuit& c,
                  const std::vector<MaterializationRecord>& records = {});
CircuitDocument load_circuit(const std::filesystem::path& path);

} // namespace pclvd
