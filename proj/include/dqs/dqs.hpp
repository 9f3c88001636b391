#ifndef DQS_DQS_HPP
#define DQS_DQS_HPP

#include "dqs/allocator.hpp"
#include "dqs/archive.hpp"
#include "dqs/config.hpp"
#include "dqs/discriminator.hpp"
#include "dqs/environment.hpp"
#include "dqs/evolution.hpp"
#include "dqs/nn.hpp"
#include "dqs/random.hpp"
#include "dqs/replay_buffer.hpp"
#include "dqs/runner.hpp"
#include "dqs/td3.hpp"

#endif  // DQS_DQS_HPP
