#pragma once

namespace maven {

/// Short git revision of the source tree at configure time, or "unknown".
const char* git_revision();

}  // namespace maven
