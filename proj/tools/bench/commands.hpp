// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "support.hpp"

namespace pgf::bench {

CommandResult cmd_verify(const RunContext& ctx);
CommandResult cmd_invariance(const RunContext& ctx);
CommandResult cmd_ghost_pulse(const RunContext& ctx);
CommandResult cmd_stiffness(const RunContext& ctx);
CommandResult cmd_memory(const RunContext& ctx);
CommandResult cmd_complexity(const RunContext& ctx);
CommandResult cmd_hessian(const RunContext& ctx);
CommandResult cmd_params(const RunContext& ctx);

struct JvpFiles {
  std::string u, du, y, dy;
};

/// Streams u/du raw files through TOSE into y/dy raw files.
CommandResult cmd_jvp(const RunContext& ctx, const JvpFiles& files);

}  // namespace pgf::bench
