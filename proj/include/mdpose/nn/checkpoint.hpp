#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mdpose/core/container.hpp"
#include "mdpose/nn/layers.hpp"

namespace mdpose::nn {

// Manifest lists every tensor with its name, shape and payload offset (in
// floats); the payload is the tensors back to back as f32le.
template <class S>
Container checkpoint_container(const std::string& model, const std::vector<NamedTensor<S>>& tensors,
                               const Json& extra) {
  Container c;
  c.header = extra.is_object() ? extra : Json::object();
  c.header["version"] = kContainerVersion;
  c.header["kind"] = "checkpoint";
  c.header["dtype"] = "f32le";
  c.header["model"] = model;
  Json list = Json::array();
  std::vector<float> flat;
  for (const auto& t : tensors) {
    list.push_back({{"name", t.name},
                    {"shape", t.tensor->shape},
                    {"offset", flat.size()},
                    {"count", t.tensor->numel()},
                    {"trainable", t.trainable()}});
    for (S v : t.tensor->data) flat.push_back(static_cast<float>(v));
  }
  c.header["params"] = list;
  c.payload = encode_f32le(flat);
  return c;
}

// Copies checkpoint values into the given tensors; names and shapes must match.
template <class S>
void restore_tensors(const Container& c, const std::string& model, const std::vector<NamedTensor<S>>& tensors) {
  expect_kind(c, "checkpoint", "f32le");
  if (c.header.value("model", std::string()) != model)
    throw IoError("checkpoint holds model '" + c.header.value("model", std::string()) + "', expected '" + model + "'");
  const auto flat = decode_f32le(c.payload);
  const Json& list = c.header.at("params");
  if (list.size() != tensors.size()) throw IoError("checkpoint tensor count does not match the model");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Json& e = list[i];
    if (e.at("name").get<std::string>() != tensors[i].name)
      throw IoError("checkpoint tensor " + std::to_string(i) + " is '" + e.at("name").get<std::string>() +
                    "', expected '" + tensors[i].name + "'");
    if (e.at("shape").get<std::vector<std::size_t>>() != tensors[i].tensor->shape)
      throw IoError("checkpoint tensor '" + tensors[i].name + "' has the wrong shape");
    const auto off = e.at("offset").get<std::size_t>();
    const auto n = e.at("count").get<std::size_t>();
    if (off + n > flat.size()) throw IoError("checkpoint payload is truncated");
    for (std::size_t k = 0; k < n; ++k) tensors[i].tensor->data[k] = static_cast<S>(flat[off + k]);
  }
}

}  // namespace mdpose::nn
