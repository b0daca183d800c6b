#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace mcopf {

/// DC bus terminal: positive pole, negative pole, or neutral (metallic return).
enum class DcTerminal { Positive, Negative, Neutral };

constexpr std::array<DcTerminal, 3> kDcTerminals{DcTerminal::Positive, DcTerminal::Negative,
                                                 DcTerminal::Neutral};

const char* to_string(DcTerminal t);

/// One AC/DC conversion path inside a station.
enum class PoleKind { Positive, Negative };

const char* to_string(PoleKind p);

DcTerminal terminal_of(PoleKind p);

struct AcBus {
    std::string id;
    double vmin = 0.9;
    double vmax = 1.1;
    double gshunt = 0.0;
    double bshunt = 0.0;
    bool is_reference = false;
};

struct AcBranch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    double g = 0.0;  // series admittance y = g + j*b
    double b = 0.0;
    double rating = 1.0;  // apparent power limit per direction
};

struct Generator {
    std::string id;
    std::string bus;
    double pmin = 0.0;
    double pmax = 0.0;
    double qmin = 0.0;
    double qmax = 0.0;
    double cost_a = 0.0;  // $ + $/pu * P + $/pu^2 * P^2
    double cost_b = 0.0;
    double cost_c = 0.0;
};

struct AcAttachment {
    std::string bus;
};

struct DcAttachment {
    std::string bus;
    DcTerminal terminal = DcTerminal::Positive;
};

using LoadAttachment = std::variant<AcAttachment, DcAttachment>;

struct Load {
    std::string id;
    LoadAttachment attachment;
    double p = 0.0;
    double q = 0.0;  // must be 0 for DC attachments
};

struct DcBus {
    std::string id;
    std::set<DcTerminal> terminals;
    double vmin_pole = 0.9;
    double vmax_pole = 1.1;
    double vmax_neutral = 0.1;
    bool has(DcTerminal t) const { return terminals.count(t) > 0; }
};

struct DcConductor {
    double resistance = 0.0;  // pu, > 0
    double rating = 0.0;      // current magnitude limit, pu
};

struct DcBranch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    std::map<DcTerminal, DcConductor> conductors;
    bool has(DcTerminal t) const { return conductors.count(t) > 0; }
};

struct TransformerParams {
    double g = 0.0;
    double b = 0.0;
    double tap = 1.0;
};

struct ReactorParams {
    double g = 0.0;
    double b = 0.0;
};

struct ConverterPole {
    PoleKind pole = PoleKind::Positive;
    double smax = 1.0;
    double pmin_ac = -1.0;
    double pmax_ac = 1.0;
    double qmin_ac = -1.0;
    double qmax_ac = 1.0;
    double pmin_dc = -1.0;
    double pmax_dc = 1.0;
    double imax_ac = 1.0;
    double imin_dc = -1.0;
    double imax_dc = 1.0;
    double vmin_cv = 0.8;
    double vmax_cv = 1.2;
    double loss_a = 0.0;
    double loss_b = 0.0;
    double loss_c = 0.0;
    TransformerParams transformer;
    double filter_b = 0.0;
    ReactorParams reactor;
};

enum class ConverterConfig { Bipolar, AsymMonopolePositive, AsymMonopoleNegative, SymMonopole };

const char* to_string(ConverterConfig c);

/// DC terminals the configuration requires at the converter's DC bus.
std::set<DcTerminal> required_terminals(ConverterConfig c);

/// Poles the configuration carries.
std::vector<PoleKind> poles_of(ConverterConfig c);

/// Whether the station connects to the neutral terminal of its DC bus.
bool has_neutral_connection(ConverterConfig c);

struct Grounding {
    enum class Kind { None, Rigid, Resistive };
    Kind kind = Kind::None;
    double resistance = 0.0;  // pu, > 0 for Resistive
};

struct ConverterStation {
    std::string id;
    std::string ac_bus;
    std::string dc_bus;
    ConverterConfig configuration = ConverterConfig::Bipolar;
    std::vector<ConverterPole> poles;  // one entry per pole of the configuration
    Grounding grounding;

    const ConverterPole* pole(PoleKind k) const;
};

/// Immutable per-unit description of the hybrid AC/DC grid. Construction is
/// single-threaded; afterwards the struct is safe to share read-only.
struct Network {
    double base_mva = 100.0;
    double base_kv = 345.0;
    std::vector<AcBus> ac_buses;
    std::vector<AcBranch> ac_branches;
    std::vector<Generator> generators;
    std::vector<Load> loads;
    std::vector<DcBus> dc_buses;
    std::vector<DcBranch> dc_branches;
    std::vector<ConverterStation> converters;

    // Set on networks produced by derive_balanced_equivalent: the DC side is a
    // single-conductor aggregate and only the Positive terminal is populated.
    bool single_conductor_view = false;
};

struct Violation {
    std::string entity;
    std::string rule;
};

/// Checks all type invariants and referential integrity. Violations are data,
/// not failures; an empty list means the network is structurally sound.
std::vector<Violation> validate(const Network& network);

/// Id -> index lookups and adjacency, built once per network.
class NetworkIndex {
public:
    explicit NetworkIndex(const Network& network);

    int ac_bus(const std::string& id) const;
    int dc_bus(const std::string& id) const;

    // Adjacency; pair.second is true when the bus is the branch's from side.
    const std::vector<std::pair<int, bool>>& ac_branches_at(int ac_bus) const {
        return ac_branches_at_[ac_bus];
    }
    const std::vector<int>& generators_at(int ac_bus) const { return generators_at_[ac_bus]; }
    const std::vector<int>& ac_loads_at(int ac_bus) const { return ac_loads_at_[ac_bus]; }
    const std::vector<int>& converters_at_ac(int ac_bus) const { return converters_at_ac_[ac_bus]; }
    const std::vector<std::pair<int, bool>>& dc_branches_at(int dc_bus) const {
        return dc_branches_at_[dc_bus];
    }
    const std::vector<int>& converters_at_dc(int dc_bus) const { return converters_at_dc_[dc_bus]; }
    const std::vector<int>& dc_loads_at(int dc_bus) const { return dc_loads_at_[dc_bus]; }

    /// Connected components of the AC graph; component id per bus.
    const std::vector<int>& ac_component_of() const { return ac_component_; }
    int num_ac_components() const { return num_ac_components_; }

private:
    std::unordered_map<std::string, int> ac_bus_index_;
    std::unordered_map<std::string, int> dc_bus_index_;
    std::vector<std::vector<std::pair<int, bool>>> ac_branches_at_;
    std::vector<std::vector<int>> generators_at_;
    std::vector<std::vector<int>> ac_loads_at_;
    std::vector<std::vector<int>> converters_at_ac_;
    std::vector<std::vector<std::pair<int, bool>>> dc_branches_at_;
    std::vector<std::vector<int>> converters_at_dc_;
    std::vector<std::vector<int>> dc_loads_at_;
    std::vector<int> ac_component_;
    int num_ac_components_ = 0;
};

/// Kept alongside the aggregated network so per-pole quantities can be mapped
/// back to the multi-conductor originals.
struct BalancedMap {
    std::vector<int> converter_pole_count;  // per original converter
    std::vector<int> branch_pole_count;     // pole conductors lumped per original branch
};

struct BalancedEquivalent {
    Network network;
    BalancedMap map;
};

/// Aggregates a balanced bipolar network into its single-conductor view: each
/// pole pair becomes one conductor of half resistance, each station one lumped
/// converter of doubled ratings. Throws NotBalanceable when a converter is not
/// bipolar with identical poles or a branch's pole resistances differ.
BalancedEquivalent derive_balanced_equivalent(const Network& network);

/// Same aggregation without the balance preconditions: monopolar converters
/// and branches are lumped as single-pole stations/conductors. Used to mimic a
/// single-conductor tool on an unbalanced network; the result has no claim to
/// physical equivalence.
BalancedEquivalent derive_balanced_view_forced(const Network& network);

}  // namespace mcopf
