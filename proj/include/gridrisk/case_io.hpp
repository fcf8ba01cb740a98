#pragma once

#include <map>
#include <string>
#include <vector>

#include "gridrisk/grid_model.hpp"

namespace gridrisk {

// Parsed case plus provenance metadata. checksum is a content hash of the
// canonical serialized grid, used to guard resumed runs and rankings.
struct CaseDocument {
    GridCase grid;
    std::string source;
    std::string checksum;
    std::vector<std::string> warnings;
};

// Native case format: one JSON document, all quantities per-unit on
// base_mva. See schemas/case.schema. Round-trips exactly.
CaseDocument parse_native_case(const std::string& text);
std::string serialize_native_case(const GridCase& grid, const std::string& source = "");

// MATPOWER case format, version 2 subset (baseMVA, bus, gen, branch).
// Branches with a nonzero ratio column are classified as transformers.
// Unsupported blocks produce warnings, not errors.
CaseDocument parse_matpower_case(const std::string& text);

// FNV-1a hash of the canonical serialization, hex encoded.
std::string case_checksum(const GridCase& grid);

// Per-component failure rates, failures/year.
struct ReliabilityTable {
    std::map<ComponentClass, double> class_defaults;
    std::map<ComponentRef, double> overrides;

    double lambda_for(const ComponentRef& ref) const {
        auto it = overrides.find(ref);
        if (it != overrides.end()) return it->second;
        return class_defaults.at(ref.cls);
    }
};

// Standard class defaults: lines 0.05/yr, transformers 0.02/yr,
// generators 0.10/yr.
ReliabilityTable default_reliability();

// CSV with header `kind,target,value,unit`; kind in {lambda, mttf}, target a
// component class or class:<id> ref, unit per_year or years. Rows apply in
// order, last wins; classes not mentioned keep the defaults above.
ReliabilityTable load_reliability(const std::string& text, const GridCase& grid);

} // namespace gridrisk
