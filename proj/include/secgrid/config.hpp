#pragma once

#include <string_view>

#include "secgrid/netsim.hpp"

namespace secgrid {

// key = value lines, '#' comments. Unknown keys are rejected so typos fail
// loudly. See README for the full key list.
ScenarioConfig parse_scenario_config(std::string_view text);

// One action per line:
//   drop src=<id> dst=<id> type=<MsgType> ordinal=<n>
//   tamper ... bit=<n>
//   delay ... ticks=<n>
//   replay ... at=<tick>
//   rollback label=<label> version=<v> at=<tick>
//   rollback-keyring version=<v> at=<tick>
//   restart at=<tick> duration=<ticks>
//   set-host-clock offset=<signed> at=<tick>
//   reinit meter=<id> at=<tick>
AdversaryScript parse_adversary_script(std::string_view text);

std::optional<MsgType> msg_type_from_name(std::string_view name);

}  // namespace secgrid
