#include "maven/version.hpp"

namespace maven {

const char* git_revision() { return MAVEN_GIT_REVISION; }

}  // namespace maven
