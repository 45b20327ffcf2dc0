#include "fxptrain/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fxptrain/errors.hpp"

namespace fxptrain {

namespace {

constexpr char kMagic[8] = {'F', 'X', 'P', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw DataError(path + ": truncated checkpoint");
  return v;
}

void put_doubles(std::ostream& out, const double* p, std::uint64_t n) {
  put_u64(out, n);
  out.write(reinterpret_cast<const char*>(p),
            static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::istream& in, double* p, std::uint64_t want,
                 const std::string& path) {
  const std::uint64_t n = get_u64(in, path);
  if (n != want)
    throw DataError(path + ": checkpoint tensor size " + std::to_string(n) +
                    " does not match model (" + std::to_string(want) + ")");
  if (!in.read(reinterpret_cast<char*>(p),
               static_cast<std::streamsize>(n * sizeof(double))))
    throw DataError(path + ": truncated checkpoint");
}

std::vector<Tensor*> model_state(Model& m) {
  std::vector<Tensor*> out;
  for (auto& layer : m.layers) layer->state_tensors(out);
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& m, const Sgd& sgd,
                     const AdamScalars& adam, std::int64_t iter, int epoch) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, static_cast<std::uint64_t>(iter));
  put_u64(out, static_cast<std::uint64_t>(epoch));

  const std::vector<ParamRef> params = m.params();
  put_u64(out, params.size());
  for (const ParamRef& p : params)
    put_doubles(out, p.value->ptr(), static_cast<std::uint64_t>(p.value->numel()));

  const std::vector<Tensor*> state = model_state(m);
  put_u64(out, state.size());
  for (const Tensor* t : state)
    put_doubles(out, t->ptr(), static_cast<std::uint64_t>(t->numel()));

  const std::vector<ClipRef> clips = m.clips();
  put_u64(out, clips.size());
  for (const ClipRef& c : clips) {
    const double v = c.clip->value;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }

  put_u64(out, m.trainables.size());
  for (const TrainableLayer* t : m.trainables) {
    const double g = t->q.gstate.gamma;
    out.write(reinterpret_cast<const char*>(&g), sizeof(g));
  }

  put_u64(out, sgd.velocity_.size());
  for (const Tensor& v : sgd.velocity_)
    put_doubles(out, v.ptr(), static_cast<std::uint64_t>(v.numel()));

  put_u64(out, static_cast<std::uint64_t>(adam.t_));
  put_doubles(out, adam.m_.data(), adam.m_.size());
  put_doubles(out, adam.v_.data(), adam.v_.size());

  if (!out) throw DataError("checkpoint write failed: " + path);
}

ResumePoint load_checkpoint(const std::string& path, Model& m, Sgd& sgd,
                            AdamScalars& adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path + ": not a checkpoint file (bad magic)");

  ResumePoint rp;
  rp.iter = static_cast<std::int64_t>(get_u64(in, path));
  rp.epoch = static_cast<int>(get_u64(in, path));

  const std::vector<ParamRef> params = m.params();
  if (get_u64(in, path) != params.size())
    throw DataError(path + ": parameter count mismatch");
  for (const ParamRef& p : params)
    get_doubles(in, p.value->ptr(), static_cast<std::uint64_t>(p.value->numel()), path);

  const std::vector<Tensor*> state = model_state(m);
  if (get_u64(in, path) != state.size())
    throw DataError(path + ": state tensor count mismatch");
  for (Tensor* t : state)
    get_doubles(in, t->ptr(), static_cast<std::uint64_t>(t->numel()), path);

  const std::vector<ClipRef> clips = m.clips();
  if (get_u64(in, path) != clips.size())
    throw DataError(path + ": clip count mismatch");
  for (const ClipRef& c : clips) {
    double v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
      throw DataError(path + ": truncated checkpoint");
    c.clip->value = v;
  }

  if (get_u64(in, path) != m.trainables.size())
    throw DataError(path + ": trainable count mismatch");
  for (TrainableLayer* t : m.trainables) {
    double g = 0;
    if (!in.read(reinterpret_cast<char*>(&g), sizeof(g)))
      throw DataError(path + ": truncated checkpoint");
    t->q.gstate.gamma = g;
  }

  if (get_u64(in, path) != sgd.velocity_.size())
    throw DataError(path + ": velocity count mismatch");
  for (Tensor& v : sgd.velocity_)
    get_doubles(in, v.ptr(), static_cast<std::uint64_t>(v.numel()), path);

  adam.t_ = static_cast<std::int64_t>(get_u64(in, path));
  get_doubles(in, adam.m_.data(), adam.m_.size(), path);
  get_doubles(in, adam.v_.data(), adam.v_.size(), path);
  return rp;
}

}  // namespace fxptrain
