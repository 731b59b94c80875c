/**
 * Input sampling: keyboard and gamepad map to the dual-joystick layout —
 * one stick drives two translational axes (x/y), the other the third (z).
 *
 * Keyboard: W/S -> +/-y, A/D -> -/+x, R/F -> +/-z, space -> gripper toggle,
 * Q/E -> yaw rotation while the rotation modifier (shift) is held, which
 * bypasses the policy entirely.
 */

import { UserInputPayload } from "./protocol.js";

export const GAMEPAD_DEADZONE = 0.1;
export const ROTATION_RATE = 0.05; // radians per tick in bypass mode

export class KeyState {
  private down = new Set<string>();
  private toggleQueued = false;

  keyDown(code: string): void {
    if (code === "Space" && !this.down.has(code)) this.toggleQueued = true;
    this.down.add(code);
  }

  keyUp(code: string): void {
    this.down.delete(code);
  }

  has(code: string): boolean {
    return this.down.has(code);
  }

  /** Gripper toggles are edge-triggered: one event per key press. */
  takeToggle(): boolean {
    const t = this.toggleQueued;
    this.toggleQueued = false;
    return t;
  }
}

function clamp(v: number): number {
  return Math.max(-1, Math.min(1, v));
}

export function sampleKeyboard(keys: KeyState): UserInputPayload {
  const rotationMode = keys.has("ShiftLeft") || keys.has("ShiftRight");
  if (rotationMode && (keys.has("KeyQ") || keys.has("KeyE"))) {
    const yaw = (keys.has("KeyQ") ? 1 : 0) - (keys.has("KeyE") ? 1 : 0);
    return {
      translation: [0, 0, 0],
      rotation: [0, 0, yaw * ROTATION_RATE],
      gripper_toggle: keys.takeToggle(),
    };
  }
  const x = (keys.has("KeyD") ? 1 : 0) - (keys.has("KeyA") ? 1 : 0);
  const y = (keys.has("KeyW") ? 1 : 0) - (keys.has("KeyS") ? 1 : 0);
  const z = (keys.has("KeyR") ? 1 : 0) - (keys.has("KeyF") ? 1 : 0);
  return {
    translation: [clamp(x), clamp(y), clamp(z)],
    rotation: null,
    gripper_toggle: keys.takeToggle(),
  };
}

export interface GamepadLike {
  axes: number[];
  buttons: { pressed: boolean }[];
}

function applyDeadzone(v: number): number {
  if (Math.abs(v) < GAMEPAD_DEADZONE) return 0;
  return clamp(v);
}

/** Left stick -> x/y (y axis inverted, stick-up is +y), right stick
 * vertical -> z. Button 0 toggles the gripper. */
export function sampleGamepad(pad: GamepadLike,
                              previousButton: boolean): [UserInputPayload, boolean] {
  const x = applyDeadzone(pad.axes[0] ?? 0);
  const y = applyDeadzone(-(pad.axes[1] ?? 0));
  const z = applyDeadzone(-(pad.axes[3] ?? 0));
  const pressed = pad.buttons[0]?.pressed ?? false;
  const toggle = pressed && !previousButton;
  return [
    { translation: [x, y, z], rotation: null, gripper_toggle: toggle },
    pressed,
  ];
}
