// Simulates one activity and prints the clean, interfered and denoised
// Doppler spectrograms as ASCII shades (rows = Doppler, columns = time).
//   spectrogram_ascii [activity] [seed]

#include <cstdio>
#include <string>

#include "mdpose/harness/dataset.hpp"

using namespace mdpose;

static void show(const char* title, const caf::Spectrogram& s) {
  static const char shades[] = " .:-=+*#%@";
  std::printf("%s\n", title);
  for (std::size_t k = s.bins(); k-- > 0;) {
    std::printf("%+6.0f Hz |", s.doppler_axis[k]);
    for (std::size_t t = 0; t < s.frames(); ++t) {
      const double v = std::clamp(s.at(k, t), 0.0, 1.0);
      std::putchar(shades[static_cast<int>(v * 9.0 + 0.5)]);
    }
    std::putchar('\n');
  }
  std::putchar('\n');
}

int main(int argc, char** argv) {
  const auto kind = motion::parse_activity(argc > 1 ? argv[1] : "W+");
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 1;
  harness::RadarConfig rc;
  const auto pose = motion::generate_activity(kind, 6.0, seed);
  const auto pair = harness::simulate_spectrograms(pose, rc, seed);
  show("S (no interference)", pair.S);
  show("M (DSI, clutter, noise)", pair.M);
  show("D (denoised M)", denoise::denoise(pair.M, rc.denoise));
}
