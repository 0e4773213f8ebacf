// Wire schema for the steering service protocol. Every outgoing message is
// validated before it is sent; every incoming frame is validated on receipt.
import { z } from "zod";

export const Vec2 = z.tuple([z.number().finite(), z.number().finite()]);
export const Polyline = z.array(Vec2).min(1);
export const TrajectoryList = z.array(z.array(Vec2));

export const InteractionSchema = z.discriminatedUnion("kind", [
  z.object({ kind: z.literal("point"), z: Vec2 }),
  z.object({ kind: z.literal("sketch"), points: z.array(Vec2).min(2).max(256) }),
  z.object({ kind: z.literal("nudge"), prefix: Polyline }),
]);

export const GuidanceConfigSchema = z.object({
  method: z.enum(["rs", "op", "pr", "bi", "gd", "ss"]),
  beta: z.number().min(0),
  cutoff_step: z.number().int().min(0),
  mcmc_steps: z.number().int().min(1),
  batch: z.number().int().min(1).max(256),
  seed: z.number().int().optional(),
});

export const ClientMessage = z.discriminatedUnion("type", [
  z.object({
    id: z.string(),
    type: z.literal("steer"),
    interaction: InteractionSchema,
    config: GuidanceConfigSchema,
  }),
  z.object({ id: z.string(), type: z.literal("execute"), index: z.number().int().min(0) }),
  z.object({ id: z.string(), type: z.literal("nudge_live"), prefix: Polyline }),
  z.object({
    id: z.string(),
    type: z.literal("reset"),
    state: Vec2.optional(),
    seed: z.number().int(),
  }),
]);

export const ServerMessage = z.discriminatedUnion("type", [
  z.object({
    id: z.string(),
    type: z.literal("snapshot"),
    step: z.number().int(),
    trajectories: TrajectoryList,
  }),
  z.object({
    id: z.string(),
    type: z.literal("batch"),
    trajectories: TrajectoryList,
    costs: z.array(z.number()),
    collisions: z.array(z.boolean()),
    ranking: z.array(z.number().int()),
    executed_index: z.number().int(),
  }),
  z.object({
    id: z.string(),
    type: z.literal("tick"),
    state: Vec2,
    t: z.number().int(),
    collision: z.boolean(),
  }),
  z.object({
    id: z.string(),
    type: z.literal("error"),
    code: z.string(),
    detail: z.string(),
  }),
]);

export type Interaction = z.infer<typeof InteractionSchema>;
export type GuidanceConfig = z.infer<typeof GuidanceConfigSchema>;
export type ClientMsg = z.infer<typeof ClientMessage>;
export type ServerMsg = z.infer<typeof ServerMessage>;
