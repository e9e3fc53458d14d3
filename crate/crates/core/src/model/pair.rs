use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ImageData;
use crate::error::{Error, Result};
use crate::model::ops::{attention, tokenize_pair};
use crate::model::{
    BackboneConfig, BackboneVariant, HeadConfig, HeadVariant, Sharing, BN_EPS, BN_MOMENTUM, LN_EPS,
};
use crate::numerics::{init, Bindings, Element, Graph, ParamId, ParamStore, Tensor};

/// Which input slot an image occupies. With a shared backbone both slots use
/// the same parameters; with independent backbones each slot has its own.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Slot {
    X,
    Y,
}

/// Per-relation predictions for a batch of pairs, still attached to the graph.
pub struct BatchPreds {
    /// One `[n_pairs]` tensor per relation, ordered like the relation subset.
    pub per_relation: Vec<Tensor>,
    pub bindings: Bindings,
}

/// The pair network: backbone(s) for feature extraction and a relation
/// regression head.
pub struct PairModel<E: Element> {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub store: ParamStore<E>,
    feature_spatial: Vec<usize>,
    d: usize,
    l: usize,
}

pub type PairModel32 = PairModel<f32>;

/// Images per evaluation chunk when extracting features.
const FEATURE_CHUNK: usize = 16;
/// Pairs per evaluation graph when running the head alone.
const HEAD_CHUNK: usize = 256;

impl<E: Element> PairModel<E> {
    pub fn build(backbone: BackboneConfig, head: HeadConfig, seed: u64) -> Result<Self> {
        backbone.validate()?;
        head.validate(backbone.feature_dim())?;
        let feature_spatial = backbone.feature_spatial()?;
        let d = backbone.feature_dim();
        let l: usize = feature_spatial.iter().product();

        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for prefix in backbone_prefixes(backbone.sharing) {
            add_backbone_params(&mut store, &mut rng, &backbone, prefix)?;
        }
        add_head_params(&mut store, &mut rng, &head, d, l)?;

        Ok(PairModel {
            backbone,
            head,
            store,
            feature_spatial,
            d,
            l,
        })
    }

    /// Reattach a parameter store (e.g. from a checkpoint) to its
    /// architecture. Verifies that the store lists exactly the parameters the
    /// configuration implies.
    pub fn from_parts(
        backbone: BackboneConfig,
        head: HeadConfig,
        store: ParamStore<E>,
    ) -> Result<Self> {
        let reference = Self::build(backbone, head, 0)?;
        if reference.store.len() != store.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, architecture expects {}",
                store.len(),
                reference.store.len()
            )));
        }
        for ((_, want), (_, got)) in reference.store.iter().zip(store.iter()) {
            if want.name != got.name || want.shape != got.shape || want.trainable != got.trainable {
                return Err(Error::Config(format!(
                    "checkpoint parameter '{}' {:?} does not match expected '{}' {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        Ok(PairModel { store, ..reference })
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    /// Tokens per image (L).
    pub fn token_count(&self) -> usize {
        self.l
    }

    pub fn total_parameter_count(&self) -> usize {
        self.store.trainable_count()
    }

    pub fn backbone_parameter_count(&self) -> usize {
        self.store.trainable_count_prefixed("backbone")
    }

    fn prefix_for(&self, slot: Slot) -> &'static str {
        match (self.backbone.sharing, slot) {
            (Sharing::Shared, _) => "backbone.",
            (Sharing::Independent, Slot::X) => "backbone_x.",
            (Sharing::Independent, Slot::Y) => "backbone_y.",
        }
    }

    fn check_image(&self, image: &ImageData) -> Result<()> {
        let mut expected = vec![self.backbone.in_channels];
        expected.extend_from_slice(&self.backbone.input_spatial);
        if image.shape != expected {
            return Err(Error::Shape(format!(
                "image shape {:?}, model expects {expected:?}",
                image.shape
            )));
        }
        Ok(())
    }

    fn batch_leaf(&self, g: &mut Graph<E>, images: &[&ImageData]) -> Result<Tensor> {
        let mut shape = vec![images.len(), self.backbone.in_channels];
        shape.extend_from_slice(&self.backbone.input_spatial);
        let per: usize = shape[1..].iter().product();
        let mut values = Vec::with_capacity(images.len() * per);
        for img in images {
            values.extend(img.values.iter().map(|&v| E::from_f64(v as f64)));
        }
        g.constant(&shape, values)
    }

    /// Run a batch of pairs through the full network. In training mode the
    /// bound parameters require gradients and batch-norm running statistics
    /// are updated; in evaluation mode running statistics are used.
    pub fn forward_pair_batch(
        &mut self,
        g: &mut Graph<E>,
        xs: &[&ImageData],
        ys: &[&ImageData],
        training: bool,
    ) -> Result<BatchPreds> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidArgument(format!(
                "need equally many x and y images, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        for img in xs.iter().chain(ys.iter()) {
            self.check_image(img)?;
        }
        let n = xs.len();
        let bindings = self.store.bind(g, !training)?;
        let mut bn_updates: Vec<(ParamId, Vec<E>)> = Vec::new();

        let (feats_x, feats_y) = match self.backbone.sharing {
            Sharing::Shared => {
                let all: Vec<&ImageData> = xs.iter().chain(ys.iter()).copied().collect();
                let input = self.batch_leaf(g, &all)?;
                let feats = self.backbone_forward(
                    g,
                    &bindings,
                    input,
                    "backbone.",
                    training,
                    &mut bn_updates,
                )?;
                (feats, feats)
            }
            Sharing::Independent => {
                let ix = self.batch_leaf(g, xs)?;
                let iy = self.batch_leaf(g, ys)?;
                let fx = self.backbone_forward(
                    g,
                    &bindings,
                    ix,
                    "backbone_x.",
                    training,
                    &mut bn_updates,
                )?;
                let fy = self.backbone_forward(
                    g,
                    &bindings,
                    iy,
                    "backbone_y.",
                    training,
                    &mut bn_updates,
                )?;
                (fx, fy)
            }
        };
        let y_offset = match self.backbone.sharing {
            Sharing::Shared => n,
            Sharing::Independent => 0,
        };

        let k = self.head.k();
        let mut per_pair: Vec<Vec<Tensor>> = Vec::with_capacity(n);
        for i in 0..n {
            let fx = g.select(feats_x, 0, i)?;
            let fy = g.select(feats_y, 0, y_offset + i)?;
            let tx = g.reshape(fx, &[self.d, self.l])?;
            let ty = g.reshape(fy, &[self.d, self.l])?;
            per_pair.push(self.head_forward(g, &bindings, tx, ty)?);
        }
        let mut per_relation = Vec::with_capacity(k);
        for rel in 0..k {
            let scalars: Vec<Tensor> = per_pair.iter().map(|p| p[rel]).collect();
            per_relation.push(g.concat_many(&scalars, 0)?);
        }

        for (id, value) in bn_updates {
            self.store.get_mut(id).value = value;
        }
        Ok(BatchPreds {
            per_relation,
            bindings,
        })
    }

    fn backbone_forward(
        &self,
        g: &mut Graph<E>,
        b: &Bindings,
        input: Tensor,
        prefix: &str,
        training: bool,
        bn_updates: &mut Vec<(ParamId, Vec<E>)>,
    ) -> Result<Tensor> {
        let mut x = input;
        if self.backbone.variant == BackboneVariant::MSfcn {
            x = g.max_pool(x)?;
        }
        for block in 0..6 {
            let p = |suffix: &str| {
                let id = self
                    .store
                    .lookup(&format!("{prefix}block{block}.{suffix}"))
                    .expect("backbone parameter exists by construction");
                (id, b.tensor(id))
            };
            let (_, conv_w) = p("conv.w");
            let (_, conv_b) = p("conv.b");
            let (_, gamma) = p("bn.gamma");
            let (_, beta) = p("bn.beta");
            let (mean_id, _) = p("bn.running_mean");
            let (var_id, _) = p("bn.running_var");

            x = g.conv(x, conv_w, Some(conv_b))?;
            x = if training {
                let (y, batch_mean, batch_var) =
                    g.batch_norm_train(x, gamma, beta, E::from_f64(BN_EPS))?;
                let momentum = E::from_f64(BN_MOMENTUM);
                let keep = E::one() - momentum;
                let update = |old: &[E], batch: &[E]| -> Vec<E> {
                    old.iter()
                        .zip(batch)
                        .map(|(&o, &bv)| keep * o + momentum * bv)
                        .collect()
                };
                bn_updates.push((mean_id, update(&self.store.get(mean_id).value, &batch_mean)));
                bn_updates.push((var_id, update(&self.store.get(var_id).value, &batch_var)));
                y
            } else {
                let mean = self.store.get(mean_id).value.clone();
                let var = self.store.get(var_id).value.clone();
                g.batch_norm_eval(x, gamma, beta, &mean, &var, E::from_f64(BN_EPS))?
            };
            x = g.relu(x)?;
            if block < 5 {
                x = g.max_pool(x)?;
            }
        }
        Ok(x)
    }

    /// Head over one pair's `d x L` token matrices; returns K scalar tensors.
    fn head_forward(
        &self,
        g: &mut Graph<E>,
        b: &Bindings,
        tx: Tensor,
        ty: Tensor,
    ) -> Result<Vec<Tensor>> {
        match self.head.variant {
            HeadVariant::Transformer => self.head_transformer(g, b, tx, ty),
            HeadVariant::FullyConnected => self.head_fc(g, b, tx, ty),
        }
    }

    fn bound(&self, b: &Bindings, name: &str) -> Tensor {
        let id = self
            .store
            .lookup(name)
            .expect("head parameter exists by construction");
        b.tensor(id)
    }

    fn head_transformer(
        &self,
        g: &mut Graph<E>,
        b: &Bindings,
        tx: Tensor,
        ty: Tensor,
    ) -> Result<Vec<Tensor>> {
        let mut tokens = tokenize_pair(g, tx, ty)?;
        if self.head.positional_embedding {
            let pos = self.bound(b, "head.pos");
            tokens = g.add(tokens, pos)?;
        }
        let heads = self.head.num_heads;
        let dh = self.d / heads;
        for block in 0..self.head.num_blocks {
            let name = |s: &str| format!("head.block{block}.{s}");
            let ln1_g = self.bound(b, &name("ln1.gamma"));
            let ln1_b = self.bound(b, &name("ln1.beta"));
            let a = g.layer_norm(tokens, ln1_g, ln1_b, 0, E::from_f64(LN_EPS))?;

            let project = |g: &mut Graph<E>, w: &str, bias: &str| -> Result<Tensor> {
                let wt = self.bound(b, &name(w));
                let bt = self.bound(b, &name(bias));
                let y = g.matmul(wt, a)?;
                g.add_bias(y, bt, 0)
            };
            let q = project(g, "attn.wq", "attn.bq")?;
            let k = project(g, "attn.wk", "attn.bk")?;
            let v = project(g, "attn.wv", "attn.bv")?;
            let mut head_outs = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.narrow(q, 0, h * dh, dh)?;
                let kh = g.narrow(k, 0, h * dh, dh)?;
                let vh = g.narrow(v, 0, h * dh, dh)?;
                head_outs.push(attention(g, qh, kh, vh)?);
            }
            let cat = g.concat_many(&head_outs, 0)?;
            let wo = self.bound(b, &name("attn.wo"));
            let bo = self.bound(b, &name("attn.bo"));
            let mh = g.matmul(wo, cat)?;
            let mh = g.add_bias(mh, bo, 0)?;
            tokens = g.add(tokens, mh)?;

            let ln2_g = self.bound(b, &name("ln2.gamma"));
            let ln2_b = self.bound(b, &name("ln2.beta"));
            let f = g.layer_norm(tokens, ln2_g, ln2_b, 0, E::from_f64(LN_EPS))?;
            let w1 = self.bound(b, &name("ffn.w1"));
            let b1 = self.bound(b, &name("ffn.b1"));
            let w2 = self.bound(b, &name("ffn.w2"));
            let b2 = self.bound(b, &name("ffn.b2"));
            let h1 = g.matmul(w1, f)?;
            let h1 = g.add_bias(h1, b1, 0)?;
            let h1 = g.relu(h1)?;
            let ffn = g.matmul(w2, h1)?;
            let ffn = g.add_bias(ffn, b2, 0)?;
            tokens = g.add(tokens, ffn)?;
        }

        let n_tokens = g.shape(tokens)[1];
        let mut outs = Vec::with_capacity(self.head.k());
        for (i, rel) in self.head.relation_subset.iter().enumerate() {
            let tok = g.select(tokens, 1, i % n_tokens)?;
            let tok = g.reshape(tok, &[self.d, 1])?;
            let w = self.bound(b, &format!("head.rel.{rel}.w"));
            let bias = self.bound(b, &format!("head.rel.{rel}.b"));
            let y = g.matmul(w, tok)?;
            let y = g.reshape(y, &[1])?;
            let y = g.add(y, bias)?;
            outs.push(g.scale(y, E::from_f64(self.head.output_scale))?);
        }
        Ok(outs)
    }

    fn head_fc(
        &self,
        g: &mut Graph<E>,
        b: &Bindings,
        tx: Tensor,
        ty: Tensor,
    ) -> Result<Vec<Tensor>> {
        let fx = g.reshape(tx, &[1, self.d * self.l])?;
        let fy = g.reshape(ty, &[1, self.d * self.l])?;
        let cat = g.concat_many(&[fx, fy], 1)?;
        let lin = |g: &mut Graph<E>, x: Tensor, idx: usize| -> Result<Tensor> {
            let w = self.bound(b, &format!("head.fc{idx}.w"));
            let bias = self.bound(b, &format!("head.fc{idx}.b"));
            g.linear(x, w, Some(bias))
        };
        let h1 = lin(g, cat, 1)?;
        let h1 = g.relu(h1)?;
        let h2 = lin(g, h1, 2)?;
        let h2 = g.relu(h2)?;
        let out = lin(g, h2, 3)?;
        let mut outs = Vec::with_capacity(self.head.k());
        for i in 0..self.head.k() {
            let y = g.select(out, 1, i)?;
            outs.push(g.scale(y, E::from_f64(self.head.output_scale))?);
        }
        Ok(outs)
    }

    // ── Evaluation paths ─────────────────────────────────────────────

    /// Evaluation-mode features for a batch of images: each returned vector
    /// is the row-major `d x L` token matrix of one image.
    pub fn extract_features_batch(&self, images: &[&ImageData], slot: Slot) -> Result<Vec<Vec<E>>> {
        for img in images {
            self.check_image(img)?;
        }
        let prefix = self.prefix_for(slot);
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(FEATURE_CHUNK) {
            let mut g = Graph::new();
            let bindings = self
                .store
                .bind_filtered(&mut g, true, |n| n.starts_with(prefix))?;
            let input = self.batch_leaf(&mut g, chunk)?;
            let feats =
                self.backbone_forward(&mut g, &bindings, input, prefix, false, &mut Vec::new())?;
            for i in 0..chunk.len() {
                let f = g.select(feats, 0, i)?;
                out.push(g.value(f).to_vec());
            }
        }
        Ok(out)
    }

    /// Evaluation-mode features of a single image.
    pub fn extract_features(&self, image: &ImageData, slot: Slot) -> Result<Vec<E>> {
        Ok(self.extract_features_batch(&[image], slot)?.remove(0))
    }

    /// Run only the head over pre-extracted feature pairs; returns the K
    /// predicted relations per pair.
    pub fn head_eval_batch(&self, pairs: &[(&[E], &[E])]) -> Result<Vec<Vec<f64>>> {
        let feat_len = self.d * self.l;
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(HEAD_CHUNK) {
            let mut g = Graph::new();
            let bindings = self
                .store
                .bind_filtered(&mut g, true, |n| n.starts_with("head."))?;
            for &(fx, fy) in chunk {
                if fx.len() != feat_len || fy.len() != feat_len {
                    return Err(Error::Shape(format!(
                        "feature length {} or {}, expected {feat_len}",
                        fx.len(),
                        fy.len()
                    )));
                }
                let tx = g.constant(&[self.d, self.l], fx.to_vec())?;
                let ty = g.constant(&[self.d, self.l], fy.to_vec())?;
                let preds = self.head_forward(&mut g, &bindings, tx, ty)?;
                out.push(preds.iter().map(|&t| g.scalar(t).to_f64()).collect());
            }
        }
        Ok(out)
    }

    /// Predicted relations for one image pair (evaluation mode).
    pub fn predict_relations(&self, x: &ImageData, y: &ImageData) -> Result<Vec<f64>> {
        let fx = self.extract_features(x, Slot::X)?;
        let fy = self.extract_features(y, Slot::Y)?;
        Ok(self.head_eval_batch(&[(&fx, &fy)])?.remove(0))
    }

    /// Structured architecture summary: layers, shapes, parameter counts.
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        let variant = match self.backbone.variant {
            BackboneVariant::Sfcn => "SFCN",
            BackboneVariant::MSfcn => "mSFCN",
        };
        let sharing = match self.backbone.sharing {
            Sharing::Shared => "shared",
            Sharing::Independent => "independent",
        };
        let fmt_extents = |e: &[usize]| {
            e.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("x")
        };
        lines.push(format!(
            "backbone: {variant} ({sharing}), input {}x{}",
            self.backbone.in_channels,
            fmt_extents(&self.backbone.input_spatial)
        ));
        let mut extents = self.backbone.input_spatial.clone();
        let mut in_ch = self.backbone.in_channels;
        if self.backbone.variant == BackboneVariant::MSfcn {
            extents.iter_mut().for_each(|e| *e /= 2);
            lines.push(format!(
                "  pool /2            -> {}x{}",
                in_ch,
                fmt_extents(&extents)
            ));
        }
        for block in 0..6 {
            let out_ch = self.backbone.channel_plan[block];
            let k: usize = if block < 5 { 3 } else { 1 };
            let params =
                (in_ch * k.pow(self.backbone.spatial_dims as u32) + 1) * out_ch + 2 * out_ch;
            if block < 5 {
                extents.iter_mut().for_each(|e| *e /= 2);
            }
            lines.push(format!(
                "  block{}: conv k{k} {in_ch}->{out_ch}, bn, relu{} -> {out_ch}x{} ({params} params)",
                block + 1,
                if block < 5 { ", pool /2" } else { "" },
                fmt_extents(&extents)
            ));
            in_ch = out_ch;
        }
        lines.push(format!(
            "features: {}x{} per image, tokens {}x{} concatenated",
            self.d,
            fmt_extents(&self.feature_spatial),
            self.d,
            2 * self.l
        ));
        match self.head.variant {
            HeadVariant::Transformer => lines.push(format!(
                "head: transformer, {} blocks, {} heads, output scale {}",
                self.head.num_blocks, self.head.num_heads, self.head.output_scale
            )),
            HeadVariant::FullyConnected => lines.push(format!(
                "head: fully-connected 64 -> 64 -> {}, output scale {}",
                self.head.k(),
                self.head.output_scale
            )),
        }
        lines.push(format!(
            "relations: {}",
            self.head
                .relation_subset
                .iter()
                .map(|r| r.label())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        lines.push(format!(
            "parameters: backbone {} + head {} = {}",
            self.backbone_parameter_count(),
            self.total_parameter_count() - self.backbone_parameter_count(),
            self.total_parameter_count()
        ));
        lines.join("\n")
    }
}

fn backbone_prefixes(sharing: Sharing) -> Vec<&'static str> {
    match sharing {
        Sharing::Shared => vec!["backbone."],
        Sharing::Independent => vec!["backbone_x.", "backbone_y."],
    }
}

fn add_backbone_params<E: Element>(
    store: &mut ParamStore<E>,
    rng: &mut ChaCha8Rng,
    cfg: &BackboneConfig,
    prefix: &str,
) -> Result<()> {
    let mut in_ch = cfg.in_channels;
    for block in 0..6 {
        let out_ch = cfg.channel_plan[block];
        let k = if block < 5 { 3 } else { 1 };
        let mut w_shape = vec![out_ch, in_ch];
        w_shape.extend(std::iter::repeat_n(k, cfg.spatial_dims));
        let name = |s: &str| format!("{prefix}block{block}.{s}");
        let w = init::conv_normal(rng, &w_shape);
        store.add(name("conv.w"), w_shape, w, true)?;
        store.add(name("conv.b"), vec![out_ch], init::zeros(out_ch), true)?;
        store.add(name("bn.gamma"), vec![out_ch], init::ones(out_ch), true)?;
        store.add(name("bn.beta"), vec![out_ch], init::zeros(out_ch), true)?;
        store.add(
            name("bn.running_mean"),
            vec![out_ch],
            init::zeros(out_ch),
            false,
        )?;
        store.add(
            name("bn.running_var"),
            vec![out_ch],
            init::ones(out_ch),
            false,
        )?;
        in_ch = out_ch;
    }
    Ok(())
}

/// Initial head bias for each relation, in output-scale units: the mean of
/// the relation's value under a uniform target distribution.
fn relation_bias_init(rel: crate::relations::RelationId) -> f64 {
    use crate::relations::RelationId::*;
    match rel {
        Sum => 1.0,
        Difference => 0.0,
        Max => 2.0 / 3.0,
        Min => 1.0 / 3.0,
        _ => 0.0,
    }
}

fn add_head_params<E: Element>(
    store: &mut ParamStore<E>,
    rng: &mut ChaCha8Rng,
    head: &HeadConfig,
    d: usize,
    l: usize,
) -> Result<()> {
    match head.variant {
        HeadVariant::Transformer => {
            if head.positional_embedding {
                store.add("head.pos", vec![d, 2 * l], init::zeros(d * 2 * l), true)?;
            }
            for block in 0..head.num_blocks {
                let name = |s: &str| format!("head.block{block}.{s}");
                store.add(name("ln1.gamma"), vec![d], init::ones(d), true)?;
                store.add(name("ln1.beta"), vec![d], init::zeros(d), true)?;
                for proj in ["q", "k", "v", "o"] {
                    store.add(
                        name(&format!("attn.w{proj}")),
                        vec![d, d],
                        init::linear_uniform(rng, d, d * d),
                        true,
                    )?;
                    store.add(
                        name(&format!("attn.b{proj}")),
                        vec![d],
                        init::linear_uniform(rng, d, d),
                        true,
                    )?;
                }
                store.add(name("ln2.gamma"), vec![d], init::ones(d), true)?;
                store.add(name("ln2.beta"), vec![d], init::zeros(d), true)?;
                let hidden = 4 * d;
                store.add(
                    name("ffn.w1"),
                    vec![hidden, d],
                    init::linear_uniform(rng, d, hidden * d),
                    true,
                )?;
                store.add(
                    name("ffn.b1"),
                    vec![hidden],
                    init::linear_uniform(rng, d, hidden),
                    true,
                )?;
                store.add(
                    name("ffn.w2"),
                    vec![d, hidden],
                    init::linear_uniform(rng, hidden, d * hidden),
                    true,
                )?;
                store.add(
                    name("ffn.b2"),
                    vec![d],
                    init::linear_uniform(rng, hidden, d),
                    true,
                )?;
            }
            for rel in &head.relation_subset {
                store.add(
                    format!("head.rel.{rel}.w"),
                    vec![1, d],
                    init::linear_uniform(rng, d, d),
                    true,
                )?;
                store.add(
                    format!("head.rel.{rel}.b"),
                    vec![1],
                    vec![E::from_f64(relation_bias_init(*rel))],
                    true,
                )?;
            }
        }
        HeadVariant::FullyConnected => {
            let widths = [(2 * d * l, 64usize), (64, 64), (64, head.k())];
            for (i, (fan_in, fan_out)) in widths.iter().enumerate() {
                store.add(
                    format!("head.fc{}.w", i + 1),
                    vec![*fan_in, *fan_out],
                    init::linear_uniform(rng, *fan_in, fan_in * fan_out),
                    true,
                )?;
                let bias: Vec<E> = if i == 2 {
                    head.relation_subset
                        .iter()
                        .map(|r| E::from_f64(relation_bias_init(*r)))
                        .collect()
                } else {
                    init::linear_uniform(rng, *fan_in, *fan_out)
                };
                store.add(format!("head.fc{}.b", i + 1), vec![*fan_out], bias, true)?;
            }
        }
    }
    Ok(())
}
