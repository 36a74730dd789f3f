// Prints the facial region graph at each pooling scale: the normalized
// adjacency used by the spatial layers and the node groups each pooling
// transition collapses. Also round-trips the graph description as JSON.

#include <cstdio>
#include <spotgcn/spotgcn.hpp>

using namespace spotgcn;

namespace {

const char* kScaleNames[] = {"regions", "zones", "face"};

void print_matrix(const std::vector<double>& a, std::size_t s) {
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) std::printf(" %.3f", a[i * s + j]);
    std::printf("\n");
  }
}

}  // namespace

int main() {
  PoolHierarchy h;
  for (std::size_t scale = 0; scale < 3; ++scale) {
    const std::size_t s = h.scales[scale];
    std::printf("scale %zu (%s): %zu nodes, %zu edges\n", scale, kScaleNames[scale], s,
                h.edges[scale].size());
    print_matrix(normalize_adjacency(adjacency(h, scale), s), s);
    if (scale < 2) {
      std::printf("pooling into scale %zu:\n", scale + 1);
      for (std::size_t g = 0; g < h.groups[scale].size(); ++g) {
        std::printf("  node %zu <-", g);
        for (std::size_t n : h.groups[scale][g]) std::printf(" %zu", n);
        std::printf("\n");
      }
    }
    std::printf("\n");
  }

  // Max pooling demo: one channel, three frames, node index as the value.
  const std::size_t S = h.scales[0], T = 3, C = 1;
  std::vector<float> xv(S * T * C);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t t = 0; t < T; ++t) xv[s * T + t] = static_cast<float>(s);
  const Tensor<float> pooled = flgp_pool_stc(Tensor<float>::leaf({S, T, C}, xv), h, 0);
  std::printf("group-max of node indices after the first transition:");
  for (std::size_t g = 0; g < h.scales[1]; ++g) std::printf(" %.0f", pooled.values()[g * T]);
  std::printf("\n");

  // The same structures serialize to JSON next to a region layout.
  const Landmarks face = make_subject_assets(SynthSpec{}, 0).face;
  const RoiLayout layout = build_roi_layout(face, {64.0, 64.0, 60.0, 60.0});
  const std::string path = "/tmp/spotgcn_graph.json";
  write_graph_json(path, layout, h);
  const PoolHierarchy back = read_hierarchy_json(path);
  std::printf("graph JSON round trip: %s (%s)\n", path.c_str(),
              back.groups == h.groups && back.edges == h.edges ? "ok" : "MISMATCH");
  return 0;
}
