import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

export interface ServerInfo {
  baseUrl: string;
  model: string;
}

export function serverInfo(): ServerInfo {
  const path = join(dirname(fileURLToPath(import.meta.url)), ".server.json");
  return JSON.parse(readFileSync(path, "utf8")) as ServerInfo;
}
