#![allow(dead_code)]

use fact::RunConfig;

/// A configuration small enough to train in well under a second.
pub fn tiny() -> RunConfig {
    let mut c = RunConfig::default();
    c.data.tasks = 6;
    c.data.episodes_per_task = 2;
    c.data.steps = 24;
    c.data.dims = 3;
    c.stride = 8;
    c.tokenizer.horizon = 8;
    c.tokenizer.action_dims = 3;
    c.tokenizer.code_length = 4;
    c.tokenizer.bits = 4;
    c.tokenizer.width = 16;
    c.tokenizer.encoder_depth = 1;
    c.tokenizer.decoder_depth = 1;
    c.tokenizer.heads = 2;
    c.tokenizer.ode_steps = 3;
    c.train.steps = 6;
    c.train.batch_size = 4;
    c.train.warmup_steps = 2;
    c.checkpoint_every = 4;
    c.baselines.fast_scales = vec![1.0, 10.0];
    c.baselines.fast_vocab = 64;
    c.eval.batch = 8;
    c.eval.usage_sample = 20;
    c.sweep.code_lengths = vec![2, 4];
    c.sweep.bits = vec![4];
    c
}
