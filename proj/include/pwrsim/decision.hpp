#pragma once

#include <pwrsim/units.hpp>

#include <string>
#include <variant>
#include <vector>

namespace pwrsim {

struct SimState;

struct StartJob {
    JobIndex job = 0;
    std::vector<NodeIndex> nodes;
    friend bool operator==(const StartJob&, const StartJob&) = default;
};

struct SwitchOff {
    NodeIndex node = 0;
    friend bool operator==(const SwitchOff&, const SwitchOff&) = default;
};

struct SwitchOn {
    NodeIndex node = 0;
    friend bool operator==(const SwitchOn&, const SwitchOn&) = default;
};

/// Nodes held back for a blocked job expected to start at `est_start`.
struct Reserve {
    JobIndex job = 0;
    std::vector<NodeIndex> nodes;
    Time est_start = 0;
    friend bool operator==(const Reserve&, const Reserve&) = default;
};

struct Decision {
    std::variant<StartJob, SwitchOff, SwitchOn, Reserve> kind;
    Time issued_at = 0;
    friend bool operator==(const Decision&, const Decision&) = default;
};

[[nodiscard]] std::string describe(const Decision& d);

/// Invoked by the engine once per event batch with the post-batch state.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::vector<Decision> decide(const SimState& state) = 0;
};

}  // namespace pwrsim
