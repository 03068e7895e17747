/**
 * Chat panel controller: posts user messages, surfaces assistant questions,
 * and gates the send control. All conversational state comes back from the
 * server; on an error the previous view stays untouched (no phantom turns).
 */

import { ApiClient, ApiError } from './api.js';
import type { SessionView } from './types.js';

export interface ChatSnapshot {
  session: SessionView | null;
  busy: boolean;
  toast: string | null;
  error: string | null;
}

export class ChatController {
  private session: SessionView | null = null;
  private busy = false;
  private toast: string | null = null;
  private error: string | null = null;

  constructor(private readonly api: ApiClient) {}

  get state(): ChatSnapshot {
    return { session: this.session, busy: this.busy, toast: this.toast, error: this.error };
  }

  /** Send is live only with non-empty input and a session awaiting an answer. */
  canSend(input: string): boolean {
    if (!input.trim() || this.busy) return false;
    if (this.session === null) return true; // first message starts the session
    return this.session.phase === 'Question';
  }

  inputEnabled(): boolean {
    return this.session === null || this.session.phase === 'Question';
  }

  dismissToast(): void {
    this.toast = null;
  }

  async send(text: string): Promise<SessionView | null> {
    if (!this.canSend(text)) return this.session;
    this.busy = true;
    this.toast = null;
    this.error = null;
    try {
      this.session = this.session
        ? await this.api.sendMessage(this.session.id, text.trim())
        : await this.api.startSession(text.trim());
      return this.session;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // double-send or finished session: keep the view, raise a toast
        this.toast = typeof err.detail === 'string' ? err.detail : 'message not accepted';
        return this.session;
      }
      this.error = err instanceof Error ? err.message : String(err);
      return this.session;
    } finally {
      this.busy = false;
    }
  }

  async refresh(): Promise<SessionView | null> {
    if (!this.session) return null;
    this.session = await this.api.getSession(this.session.id);
    return this.session;
  }
}
