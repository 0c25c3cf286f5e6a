#pragma once

#include <string>
#include <vector>

namespace odesurv {

// Exit codes: 0 success, 2 malformed input (bad CSV/JSON, unknown model or
// setting, no events), 3 fit did not converge (artifact still written).
int run_cli(const std::vector<std::string>& args);

}  // namespace odesurv
