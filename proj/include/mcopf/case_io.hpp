#pragma once

#include <string>
#include <vector>

#include "mcopf/network.hpp"

namespace mcopf {

/// Solver defaults carried by a case file's optional "options" section.
struct SolverDefaults {
    double tol_kkt = 1e-8;
    int max_iter = 300;
};

/// In-memory image of an on-disk case. Sections mirror the network types;
/// values are per-unit on the declared bases.
struct CaseFile {
    std::string schema_version = "mcopf-1";
    double base_mva = 100.0;
    double base_kv = 345.0;
    std::vector<AcBus> ac_buses;
    std::vector<AcBranch> ac_branches;
    std::vector<Generator> generators;
    std::vector<Load> loads;
    std::vector<DcBus> dc_buses;
    std::vector<DcBranch> dc_branches;
    std::vector<ConverterStation> converters;
    SolverDefaults options;

    /// Lenient-mode notes (unknown fields encountered). Never serialized.
    std::vector<std::string> warnings;
};

/// Parses UTF-8 JSON bytes. In strict mode unknown fields raise SchemaError;
/// in lenient mode they are recorded as warnings. Throws ParseError (with line
/// information) on malformed JSON and SchemaError naming the failing field.
CaseFile parse_case(const std::string& bytes, bool strict = true);

/// Reads and parses a case file from disk.
CaseFile load_case(const std::string& path, bool strict = true);

/// Canonical JSON encoding: sorted keys, round-trip-exact number formatting.
/// parse_case(serialize_case(c)) reproduces c exactly. Refuses non-finite
/// values.
std::string serialize_case(const CaseFile& c);

/// Builds the validated Network. Throws CaseValidationError listing all
/// violations when the case is structurally unsound.
Network to_network(const CaseFile& c);

/// Inverse of to_network for constructing cases programmatically.
CaseFile from_network(const Network& network, SolverDefaults options = {});

}  // namespace mcopf
