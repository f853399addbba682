#pragma once

#include <string>

#ifndef MINITTS_SOURCE_DIR
#define MINITTS_SOURCE_DIR "."
#endif

inline std::string test_asset(const std::string& name) {
  return std::string(MINITTS_SOURCE_DIR) + "/assets/" + name;
}
