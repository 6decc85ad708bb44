#pragma once

namespace noiselab {

/// Entry point behind the noiselab binary; exposed for tests.
/// Returns 0 on success, 2 on usage errors, 1 on runtime errors.
int cli_main(int argc, const char* const* argv);

}  // namespace noiselab
