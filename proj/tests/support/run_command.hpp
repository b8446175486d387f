#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "dime/tensor.hpp"

namespace dime::testing {

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write: " + path.string());
  out << text;
}

/// Runs a shell command, capturing interleaved stdout/stderr and the exit
/// code. Each call gets its own capture file so results never cross-talk.
inline CommandResult run_command(const std::string& cmd,
                                 const std::filesystem::path& workdir) {
  static int counter = 0;
  std::filesystem::path capture =
      workdir / ("capture_" + std::to_string(counter++) + ".txt");
  std::string full = cmd + " > " + capture.string() + " 2>&1";
  int status = std::system(full.c_str());

  CommandResult r;
  if (std::filesystem::exists(capture)) r.output = read_file(capture);
  if (status != -1 && WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  return r;
}

/// Fresh scratch directory under the system temp root, emptied on entry.
inline std::filesystem::path scratch_dir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dime::testing
